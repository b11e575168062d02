import math

import numpy as np
import pytest

import nudge


def tone(hz, amp, n=nudge.CHUNK_SAMPLES):
    t = np.arange(n) / nudge.SAMPLE_RATE
    return amp * np.sin(2 * math.pi * hz * t)


def test_mfcc_shape_and_silence():
    m = nudge.compute_mfcc(np.zeros(16000))
    assert m.shape == (98, 13)
    c0 = math.sqrt(1 / 26) * 26 * math.log(1e-10)
    assert np.allclose(m[:, 0], c0)
    assert np.allclose(m[:, 1:], 0, atol=1e-9)


def test_loudness_and_dct():
    assert nudge.compute_loudness(np.zeros(16000)) == -120.0
    assert abs(nudge.compute_loudness(tone(1000, 1.0)) + 3.0103) < 0.01
    assert np.allclose(nudge.dct_ii(np.ones(4)), [2, 0, 0, 0], atol=1e-12)


def test_bad_input_raises():
    with pytest.raises(nudge.RangeError):
        nudge.compute_mfcc(np.zeros(100))
    with pytest.raises(nudge.NudgeError):
        nudge.compute_mfcc(np.full(16000, 2.0))


def test_vote():
    assert nudge.vote([True] * 7 + [False] * 3)
    assert not nudge.vote([True] * 6 + [False] * 4)
    with pytest.raises(nudge.NudgeError):
        nudge.vote([True] * 9)


def test_protocol_frames():
    assert nudge.encode_nudge("vibrate", 40) == bytes([0x01, 0x01, 0x28])
    assert nudge.decode_frame(bytes([0x81, 0x00])) == {"type": "ack", "status": 0, "seq": None}
    with pytest.raises(nudge.MalformedFrame):
        nudge.decode_frame(bytes([0x01, 0x09, 0x10]))


def test_model_round_trip(tmp_path):
    model = nudge.SnoreModel.init(42)
    path = str(tmp_path / "m.json")
    model.save(path)
    again = nudge.SnoreModel.load(path)
    x = tone(150, 0.3)
    p = model.predict(x)
    assert 0.0 <= p <= 1.0
    assert again.predict(x) == p
    assert again.forward(nudge.compute_mfcc(x)) == p
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(nudge.CorruptModel):
        nudge.SnoreModel.load(str(tmp_path / "bad.json"))


def test_corpus_and_wav(tmp_path):
    audio, labels = nudge.synthetic_corpus(10, 10, seed=3)
    assert audio.shape == (20, 16000)
    assert labels.sum() == 10
    path = str(tmp_path / "a.wav")
    nudge.write_wav(path, audio[0])
    back = nudge.read_wav(path)
    assert np.max(np.abs(back - audio[0])) <= 1 / 32768


def test_config_validation():
    cfg = nudge.validate_config({"vote_k": 5})
    assert cfg["vote_k"] == 5
    assert cfg["refractory_ms"] == 30000
    with pytest.raises(nudge.ConfigError):
        nudge.validate_config({"vote_k": 11})


def test_replay_with_trained_model(tmp_path):
    result = nudge.train_synthetic(n_per_class=40, epochs=8, seed=1)
    assert result["n_test"] == 16
    model_path = str(tmp_path / "model.json")
    result["model"].save(model_path)

    snore, labels = nudge.synthetic_corpus(40, 40, seed=9)
    loud = snore[labels == 1][:30]
    audio = np.concatenate([loud.ravel(), np.zeros(500)])
    config = {"model_path": model_path, "device": "none", "log_dir": str(tmp_path / "logs")}
    r = nudge.replay(audio, config)
    assert r["counters"]["chunks_seen"] == 30
    assert r["discarded_tail_samples"] == 500
    kinds = {e["kind"] for e in r["events"]}
    assert "chunk_decision" in kinds
    assert "nudge" not in kinds
    assert len(r["session_id"]) == 26
