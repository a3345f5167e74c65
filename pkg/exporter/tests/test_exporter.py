import numpy as np
import pytest

from conftest import SAMPLE_RATE, TRANSCRIPTS, write_sine_wav

from emofuse_exporter import (
    BundleSegment,
    expected_frame_count,
    export_embeddings,
    load_manifest,
    load_speech_encoder,
    load_text_encoder,
    speech_embed,
    text_embed,
    visible_length,
    write_emob,
)
from emofuse_exporter.audio import read_wav, require_rate
from emofuse_exporter.cli import run as cli_run


@pytest.fixture(scope="module")
def speech(speech_model_dir):
    return load_speech_encoder(speech_model_dir)


@pytest.fixture(scope="module")
def text(text_model_dir):
    return load_text_encoder(text_model_dir)


class TestAudio:
    def test_read_wav_basics(self, tmp_path):
        path = write_sine_wav(tmp_path / "a.wav", 0.5, seed=3)
        waveform, rate = read_wav(path)
        assert rate == SAMPLE_RATE
        assert waveform.shape == (8000,)
        assert waveform.dtype == np.float32
        assert np.abs(waveform).max() <= 1.0

    def test_stereo_averaged_to_mono(self, tmp_path):
        path = write_sine_wav(tmp_path / "st.wav", 0.25, seed=4, channels=2)
        waveform, _ = read_wav(path)
        assert waveform.shape == (4000,)

    def test_wrong_rate_rejected(self, tmp_path):
        path = write_sine_wav(tmp_path / "8k.wav", 0.5, rate=8000)
        _, rate = read_wav(path)
        with pytest.raises(ValueError):
            require_rate(path, rate)


class TestVisibleLength:
    @pytest.mark.parametrize(
        "token,expected",
        [
            ("le</w>", 2),
            ("monde</w>", 5),
            ("re", 2),
            ("##ing", 3),
            ("▁bon", 3),
            ("Ġword", 4),
            ("a", 1),
            ("</w>", 1),  # pure marker clamps to one character
        ],
    )
    def test_cases(self, token, expected):
        assert visible_length(token) == expected


class TestSpeechEncoder:
    def test_hidden_size_is_768(self, speech):
        assert speech.hidden_size == 768

    def test_frame_count_matches_conv_formula(self, speech, tmp_path):
        for seconds in (0.5, 1.0):
            path = write_sine_wav(tmp_path / f"{seconds}.wav", seconds, seed=7)
            waveform, _ = read_wav(path)
            h_p = speech_embed(speech, waveform)
            assert h_p.shape == (expected_frame_count(speech.model.config, len(waveform)), 768)
            assert h_p.dtype == np.float32
            assert np.all(np.isfinite(h_p))

    def test_frame_rate_is_about_20ms(self, speech):
        frames = expected_frame_count(speech.model.config, SAMPLE_RATE)
        assert abs(frames - 50) <= 2

    def test_too_short_audio_rejected(self, speech):
        with pytest.raises(ValueError):
            speech_embed(speech, np.zeros(100, dtype=np.float32))


class TestTextEncoder:
    def test_rows_match_char_lengths(self, text):
        h_s, lengths = text_embed(text, "allô le monde")
        assert h_s.shape == (len(lengths), 768)
        assert all(c >= 1 for c in lengths)

    def test_known_tokenization(self, text):
        # "le" is a single vocabulary unit; its visible length is 2.
        _, lengths = text_embed(text, "le")
        assert lengths == [2]

    def test_longer_words_split_into_pieces(self, text):
        h_s, lengths = text_embed(text, "urgente")
        assert sum(lengths) == len("urgente")
        assert h_s.shape[0] == len(lengths)

    def test_empty_transcript_rejected(self, text):
        with pytest.raises(ValueError):
            text_embed(text, "")
        with pytest.raises(ValueError):
            text_embed(text, "   ")


class TestEmobWriter:
    def make_segment(self, seg_id="s0", width=6):
        rng = np.random.default_rng(0)
        return BundleSegment(
            id=seg_id,
            speaker_id="spk",
            dialogue_id="dlg",
            label="ANG",
            char_lengths=[2, 3],
            h_p=rng.normal(size=(4, width)).astype(np.float32),
            h_s=rng.normal(size=(2, width)).astype(np.float32),
        )

    def test_primary_reader_accepts_output(self, tmp_path):
        from emofuse.dataio import read_bundle

        seg = self.make_segment()
        path = tmp_path / "w.emob"
        write_emob([seg], path)
        back = read_bundle(path)
        assert len(back) == 1
        assert back[0].id == "s0"
        assert back[0].h_p.tobytes() == seg.h_p.tobytes()
        assert back[0].h_s.tobytes() == seg.h_s.tobytes()
        assert back[0].char_lengths == [2, 3]

    def test_duplicate_ids_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_emob([self.make_segment(), self.make_segment()], tmp_path / "d.emob")

    def test_char_length_mismatch_rejected(self, tmp_path):
        seg = self.make_segment()
        seg.char_lengths = [1]
        with pytest.raises(ValueError):
            write_emob([seg], tmp_path / "c.emob")


class TestExport:
    def test_out_of_range_duration_warns(self, speech_model_dir, text_model_dir, tmp_path):
        short = write_sine_wav(tmp_path / "short.wav", 0.2, seed=9)
        manifest_path = tmp_path / "m.json"
        manifest_path.write_text(
            __import__("json").dumps(
                {
                    "speech_model": speech_model_dir,
                    "text_model": text_model_dir,
                    "segments": [
                        {
                            "id": "short-0",
                            "audio": str(short),
                            "transcript": "oui",
                            "label": "NEU",
                            "speaker_id": "s",
                            "dialogue_id": "d",
                        }
                    ],
                }
            )
        )
        manifest = load_manifest(manifest_path)
        with pytest.warns(UserWarning, match="duration"):
            export_embeddings(manifest, tmp_path / "short.emob")

    def test_in_range_duration_is_silent(self, manifest_path, tmp_path):
        import warnings

        manifest = load_manifest(manifest_path)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            export_embeddings(manifest, tmp_path / "ok.emob")

    def test_re_export_is_stable(self, manifest_path, tmp_path):
        from emofuse.dataio import read_bundle

        manifest = load_manifest(manifest_path)
        export_embeddings(manifest, tmp_path / "a.emob")
        export_embeddings(manifest, tmp_path / "b.emob")
        for rec_a, rec_b in zip(read_bundle(tmp_path / "a.emob"), read_bundle(tmp_path / "b.emob")):
            np.testing.assert_allclose(rec_a.h_p, rec_b.h_p, atol=1e-5)
            np.testing.assert_allclose(rec_a.h_s, rec_b.h_s, atol=1e-5)

    def test_cli_round_trip(self, manifest_path, tmp_path, capsys):
        out = tmp_path / "cli.emob"
        assert cli_run(["--manifest", str(manifest_path), "--out", str(out)]) == 0
        assert out.exists()
        stdout = capsys.readouterr().out
        for seg_id in TRANSCRIPTS:
            assert seg_id in stdout

    def test_cli_bad_manifest(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert cli_run(["--manifest", str(bad), "--out", str(tmp_path / "x.emob")]) == 1
