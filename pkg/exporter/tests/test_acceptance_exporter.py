"""Exporter acceptance: the bundle contract with the consumer library.

The frame-count expectations below were recorded from the fixture encoder's
convolutional frontend (kernels 10,3,3,3,3,2,2 with strides 5,2,2,2,2,2,2 at
16 kHz): 0.5 s -> 24 frames, 1.0 s -> 49, 2.0 s -> 99, i.e. one frame per
20 ms within rounding.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import DURATIONS

from emofuse_exporter import export_embeddings, load_manifest

RECORDED_FRAMES = {"fix-0": 24, "fix-1": 49, "fix-2": 99}


@contextmanager
def criterion(num, description):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num:02d} FAIL ({time.time() - start:.1f}s): {description}")
        raise
    print(f"\nACCEPTANCE {num:02d} PASS ({time.time() - start:.1f}s): {description}")


def test_criterion_09_exporter_contract(manifest_path, tmp_path):
    desc = "exported fixture bundle validates in the consumer with 768-wide matrices"
    with criterion(9, desc):
        from emofuse import cli as consumer_cli
        from emofuse.alignment import align_characters, align_subwords
        from emofuse.dataio import read_bundle

        manifest = load_manifest(manifest_path)
        out = tmp_path / "fixture.emob"
        summaries = export_embeddings(manifest, out)
        assert len(summaries) == 3

        # The consumer's validating reader accepts the bundle.
        records = read_bundle(out)
        assert [r.id for r in records] == list(DURATIONS)

        for rec in records:
            assert rec.h_p.shape[1] == 768
            assert rec.h_s.shape[1] == 768
            assert abs(rec.n_frames - RECORDED_FRAMES[rec.id]) <= 2
            # Within rounding of one frame per 20 ms.
            assert abs(rec.n_frames - DURATIONS[rec.id] / 0.020) <= 2

            # Both alignment methods accept the exported matrices.
            by_sub = align_subwords(rec.h_p, rec.n_subwords)
            by_char = align_characters(rec.h_p, rec.char_lengths)
            assert by_sub.shape == (rec.n_subwords, 768)
            assert by_char.shape == (rec.n_subwords, 768)
            assert np.all(np.isfinite(by_sub)) and np.all(np.isfinite(by_char))

        # The consumer CLI parses the bundle end to end.
        assert consumer_cli.run(["align", "--bundle", str(out), "--index", "0",
                                 "--out", str(tmp_path / "align.json")]) == 0
