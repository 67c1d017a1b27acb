import numpy as np
import pytest

from csipred import dataset as dsmod
from csipred.channel_sim import generate_sequence
from conftest import make_sequence_from_array


def brute_force_power(tensors):
    total = 0.0
    q, k, nr, nt = tensors.shape
    for n in range(q):
        for kk in range(k):
            for r in range(nr):
                for m in range(nt):
                    total += abs(tensors[n, kk, r, m]) ** 2
    return total / (q * k * nr * nt)


class TestNormPower:
    def test_constant_magnitude_two(self, small_config):
        tensors = np.full((5, 8, 2, 4), 2.0 + 0.0j)
        seq = make_sequence_from_array(tensors, small_config)
        assert dsmod.compute_norm_power(seq) == pytest.approx(4.0, abs=1e-12)

    def test_normalized_sequence_has_unit_power(self, small_sequence):
        p = dsmod.compute_norm_power(small_sequence)
        normed = dsmod.normalize(small_sequence, p)
        assert dsmod.compute_norm_power(normed) == pytest.approx(1.0, abs=1e-9)
        assert normed.norm_power == p

    def test_matches_elementwise_oracle(self, small_sequence):
        p = dsmod.compute_norm_power(small_sequence)
        assert p == pytest.approx(brute_force_power(small_sequence.tensors),
                                  rel=1e-12)

    def test_rejects_all_zero(self, small_config):
        seq = make_sequence_from_array(np.zeros((4, 8, 2, 4), complex), small_config)
        with pytest.raises(ValueError):
            dsmod.compute_norm_power(seq)


class TestNormalize:
    def test_unit_power_is_identity(self, small_sequence):
        normed = dsmod.normalize(small_sequence, 1.0)
        assert np.array_equal(normed.tensors, small_sequence.tensors)

    def test_scaling(self, small_config):
        tensors = np.full((3, 8, 2, 4), 2.0 + 0.0j)
        seq = make_sequence_from_array(tensors, small_config)
        normed = dsmod.normalize(seq, 4.0)
        assert np.allclose(normed.tensors, 1.0 + 0.0j)

    def test_rejects_nonpositive(self, small_sequence):
        with pytest.raises(ValueError):
            dsmod.normalize(small_sequence, 0.0)
        with pytest.raises(ValueError):
            dsmod.normalize(small_sequence, -1.0)


class TestWindow:
    def test_count(self, small_config):
        seq = generate_sequence(small_config, 30.0, 10)
        assert len(dsmod.window(seq, 3)) == 7

    def test_counts_all_legal_lengths(self, small_config):
        seq = generate_sequence(small_config, 30.0, 12)
        for l in range(1, 12):
            assert len(dsmod.window(seq, l)) == 12 - l

    def test_smallest_case(self, small_config):
        seq = generate_sequence(small_config, 30.0, 2)
        samples = dsmod.window(seq, 1)
        assert len(samples) == 1
        assert np.array_equal(samples[0].inputs[0], seq.tensors[0])
        assert np.array_equal(samples[0].target, seq.tensors[1])

    def test_boundary_case(self, small_config):
        seq = generate_sequence(small_config, 30.0, 5)
        samples = dsmod.window(seq, 4)
        assert len(samples) == 1
        assert np.array_equal(samples[0].inputs, seq.tensors[0:4])
        assert np.array_equal(samples[0].target, seq.tensors[4])

    def test_alignment(self, small_config):
        # target is always the tensor one step after the last input
        seq = generate_sequence(small_config, 30.0, 9)
        for i, sample in enumerate(dsmod.window(seq, 3)):
            t = i + 2
            assert np.array_equal(sample.inputs[-1], seq.tensors[t])
            assert np.array_equal(sample.target, seq.tensors[t + 1])
            assert sample.inputs.shape[0] == 3

    def test_rejects_bad_history(self, small_config):
        seq = generate_sequence(small_config, 30.0, 6)
        with pytest.raises(ValueError):
            dsmod.window(seq, 6)
        with pytest.raises(ValueError):
            dsmod.window(seq, 0)


class TestBuildMixed:
    def test_count_two_sequences(self, small_config):
        seqs = [generate_sequence(small_config.with_seed(s), 30.0, 100)
                for s in (1, 2)]
        ds = dsmod.build_mixed(seqs, 3)
        assert len(ds) == 194

    def test_degenerate_single_sequence(self, small_config):
        seq = generate_sequence(small_config, 30.0, 20)
        ds = dsmod.build_mixed([seq], 3, seed=0)
        manual = dsmod.window(dsmod.normalize(seq, dsmod.compute_norm_power(seq)), 3)
        got = {ds.targets[i].tobytes() for i in range(len(ds))}
        want = {s.target.astype(np.complex64).tobytes() for s in manual}
        assert got == want
        assert len(ds) == len(manual)

    def test_speed_tags_preserved(self, small_config):
        seqs = [generate_sequence(small_config.with_seed(i), speed, 30)
                for i, speed in enumerate((30.0, 40.0, 50.0))]
        ds = dsmod.build_mixed(seqs, 3)
        for speed in (30.0, 40.0, 50.0):
            assert int(np.sum(ds.speed_tags == np.float32(speed))) == 27

    def test_normalizes_each_sequence(self, small_config):
        seqs = [generate_sequence(small_config.with_seed(s), 30.0, 30)
                for s in (1, 2)]
        seqs[1] = make_sequence_from_array(seqs[1].tensors * 5.0, small_config)
        ds = dsmod.build_mixed(seqs, 3)
        # after per-sequence normalization, mean element power is 1 per source
        assert np.mean(np.abs(ds.targets) ** 2) == pytest.approx(1.0, rel=0.1)
        assert len(ds.provenance) == 2
        assert ds.provenance[1]["norm_power"] > ds.provenance[0]["norm_power"]

    def test_shuffle_deterministic(self, small_config):
        seqs = [generate_sequence(small_config.with_seed(s), 30.0, 25)
                for s in (1, 2)]
        a = dsmod.build_mixed(seqs, 2, seed=9)
        b = dsmod.build_mixed(seqs, 2, seed=9)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.speed_tags, b.speed_tags)

    def test_rejects_heterogeneous_shapes(self, small_config):
        a = generate_sequence(small_config, 30.0, 10)
        b = generate_sequence(small_config.with_seed(1), 30.0, 10)
        b = make_sequence_from_array(b.tensors[:, :4], small_config)
        with pytest.raises(ValueError):
            dsmod.build_mixed([a, b], 3)

    def test_stores_complex64(self, small_config):
        ds = dsmod.build_mixed([generate_sequence(small_config, 30.0, 10)], 3)
        assert ds.inputs.dtype == np.complex64
        assert ds.targets.dtype == np.complex64


def build_small_dataset(config, n_seqs=2, q=30, l=3):
    seqs = [generate_sequence(config.with_seed(s), 30.0, q) for s in range(n_seqs)]
    return dsmod.build_mixed(seqs, l)


class TestSplit:
    def test_70_30(self, small_config):
        ds = build_small_dataset(small_config, q=53)  # 2 * 50 = 100 samples
        train, test = dsmod.split(ds, 0.7, seed=0)
        assert len(train) == 70 and len(test) == 30
        assert train.split_tag == "train" and test.split_tag == "test"

    def test_deterministic(self, small_config):
        ds = build_small_dataset(small_config)
        a1, b1 = dsmod.split(ds, 0.7, seed=42)
        a2, b2 = dsmod.split(ds, 0.7, seed=42)
        assert np.array_equal(a1.inputs, a2.inputs)
        assert np.array_equal(b1.targets, b2.targets)

    def test_partition(self, small_config):
        ds = build_small_dataset(small_config)
        train, test = dsmod.split(ds, 0.6, seed=1)
        all_keys = sorted(ds.targets[i].tobytes() for i in range(len(ds)))
        got = sorted([train.targets[i].tobytes() for i in range(len(train))]
                     + [test.targets[i].tobytes() for i in range(len(test))])
        assert got == all_keys
        train_set = {train.targets[i].tobytes() for i in range(len(train))}
        test_set = {test.targets[i].tobytes() for i in range(len(test))}
        assert not train_set & test_set

    def test_rejects_empty_side(self, small_config):
        ds = build_small_dataset(small_config, n_seqs=1, q=5, l=3)  # 2 samples
        with pytest.raises(ValueError):
            dsmod.split(ds, 0.1, seed=0)
        with pytest.raises(ValueError):
            dsmod.split(ds, 1.5, seed=0)


class TestSplitByTime:
    def test_spans_are_disjoint(self, small_config):
        seqs = [generate_sequence(small_config.with_seed(s), 30.0, 40)
                for s in (1, 2)]
        train, test = dsmod.split_by_time(seqs, 3, 0.7, seed=0)
        # no channel tensor appears on both sides
        train_keys = {train.inputs[i, j].tobytes()
                      for i in range(len(train)) for j in range(3)}
        train_keys |= {train.targets[i].tobytes() for i in range(len(train))}
        test_keys = {test.inputs[i, j].tobytes()
                     for i in range(len(test)) for j in range(3)}
        test_keys |= {test.targets[i].tobytes() for i in range(len(test))}
        assert not train_keys & test_keys

    def test_counts(self, small_config):
        seqs = [generate_sequence(small_config, 30.0, 40)]
        train, test = dsmod.split_by_time(seqs, 3, 0.7, seed=0)
        # cut at 28: head has 28 - 3 windows, tail has 12 - 3
        assert len(train) == 25
        assert len(test) == 9
        assert train.split_tag == "train" and test.split_tag == "test"

    def test_deterministic(self, small_config):
        seqs = [generate_sequence(small_config, 30.0, 40)]
        a = dsmod.split_by_time(seqs, 3, 0.7, seed=4)
        b = dsmod.split_by_time(seqs, 3, 0.7, seed=4)
        assert np.array_equal(a[0].inputs, b[0].inputs)
        assert np.array_equal(a[1].targets, b[1].targets)

    def test_rejects_short_span(self, small_config):
        seqs = [generate_sequence(small_config, 30.0, 10)]
        with pytest.raises(ValueError):
            dsmod.split_by_time(seqs, 3, 0.9, seed=0)


class TestSaveLoad:
    def test_round_trip_bit_exact(self, small_config, tmp_path):
        ds = build_small_dataset(small_config)
        path = str(tmp_path / "ds.csif")
        dsmod.save(ds, path)
        back = dsmod.load(path)
        assert np.array_equal(ds.inputs, back.inputs)
        assert np.array_equal(ds.targets, back.targets)
        assert np.array_equal(ds.speed_tags, back.speed_tags)
        assert back.sample_period == ds.sample_period
        assert back.train_fraction == ds.train_fraction
        assert back.provenance == ds.provenance

    def test_sidecar_written(self, small_config, tmp_path):
        ds = build_small_dataset(small_config)
        path = str(tmp_path / "ds.csif")
        dsmod.save(ds, path)
        assert (tmp_path / "ds.meta.json").exists()

    def test_truncated_file_rejected(self, small_config, tmp_path):
        ds = build_small_dataset(small_config)
        path = str(tmp_path / "ds.csif")
        dsmod.save(ds, path)
        data = open(path, "rb").read()
        open(path, "wb").write(data[:len(data) // 2])
        with pytest.raises(dsmod.DatasetFormatError):
            dsmod.load(path)

    def test_bad_magic_rejected(self, small_config, tmp_path):
        ds = build_small_dataset(small_config)
        path = str(tmp_path / "ds.csif")
        dsmod.save(ds, path)
        data = bytearray(open(path, "rb").read())
        data[:4] = b"XXXX"
        open(path, "wb").write(bytes(data))
        with pytest.raises(dsmod.DatasetFormatError):
            dsmod.load(path)

    def test_header_shape_mismatch_rejected(self, small_config, tmp_path):
        # corrupt the sample count so header and payload disagree
        ds = build_small_dataset(small_config)
        path = str(tmp_path / "ds.csif")
        dsmod.save(ds, path)
        data = bytearray(open(path, "rb").read())
        import struct
        data[6 + 16:6 + 20] = struct.pack("<I", len(ds) + 3)
        open(path, "wb").write(bytes(data))
        with pytest.raises(dsmod.DatasetFormatError):
            dsmod.load(path)

    def test_rejects_empty_dataset(self, small_config):
        ds = build_small_dataset(small_config)
        with pytest.raises(ValueError):
            dsmod.Dataset(ds.inputs[:0], ds.targets[:0], ds.speed_tags[:0],
                          ds.sample_period)
