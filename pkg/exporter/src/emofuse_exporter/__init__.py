"""Bridge from audio + transcripts to EMOB embedding bundles.

Runs frozen pre-trained speech and text encoders over manifest-listed
segments and writes their last-hidden-state matrices bit-exactly in the
bundle format the emofuse library consumes. The encoders are never
fine-tuned here: exported embeddings are pre-trained, not emotion-adapted.
"""

from .emob import BundleSegment, write_emob
from .encoders import (
    SpeechEncoder,
    TextEncoder,
    expected_frame_count,
    load_speech_encoder,
    load_text_encoder,
    speech_embed,
    text_embed,
    visible_length,
)
from .export import export_embeddings
from .manifest import DURATION_RANGE, ExportManifest, ExportSegment, load_manifest

__version__ = "0.1.0"
