import dataclasses

import numpy as np
import pytest
import torch

from csipred import dataset as dsmod
from csipred import predictor as pr
from csipred import training as tr
from csipred.channel_sim import SimConfig, generate_sequence

ARCH = pr.ArchConfig(history_len=2, n_rx=2, n_tx=4, n_subbands=8, n_res_blocks=1)


def tiny_datasets(seed=0, q=20):
    cfg = SimConfig(n_tx=4, n_rx=2, n_subbands=8, n_paths=4, seed=seed)
    seqs = [generate_sequence(cfg.with_seed(s), 30.0, q) for s in (seed, seed + 1)]
    ds = dsmod.build_mixed(seqs, 2)
    return dsmod.split(ds, 0.7, seed=0)


def brute_force_loss(pred, target):
    total = 0.0
    for b in range(pred.shape[0]):
        for k in range(pred.shape[1]):
            for r in range(pred.shape[2]):
                for m in range(pred.shape[3]):
                    total += abs(pred[b, k, r, m] - target[b, k, r, m]) ** 2
    return total / pred.shape[0]


class TestMseLoss:
    def test_zero_for_exact(self):
        x = np.ones((3, 2, 2, 2), dtype=complex)
        assert tr.mse_loss(x, x) == 0.0

    def test_unit_offsets(self):
        # two sub-bands, single antenna pair, every entry off by 1+0j
        target = np.zeros((2, 1, 1), dtype=complex)
        pred = target + (1.0 + 0.0j)
        assert tr.mse_loss(pred, target) == pytest.approx(2.0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(5)
        pred = rng.standard_normal((4, 3, 2, 2)) + 1j * rng.standard_normal((4, 3, 2, 2))
        target = rng.standard_normal((4, 3, 2, 2)) + 1j * rng.standard_normal((4, 3, 2, 2))
        assert tr.mse_loss(pred, target) == pytest.approx(
            brute_force_loss(pred, target), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tr.mse_loss(np.zeros((2, 1, 1)), np.zeros((3, 1, 1)))

    def test_torch_batch_loss_agrees(self):
        rng = np.random.default_rng(8)
        pred = rng.standard_normal((5, 3, 2, 2)) + 1j * rng.standard_normal((5, 3, 2, 2))
        target = rng.standard_normal((5, 3, 2, 2)) + 1j * rng.standard_normal((5, 3, 2, 2))
        tp = torch.from_numpy(pr.encode_batch(pred[:, None])).reshape(5, -1)
        tt = torch.from_numpy(pr.encode_batch(target[:, None])).reshape(5, -1)
        assert float(tr._batch_loss(tp, tt)) == pytest.approx(
            tr.mse_loss(pred, target), rel=1e-12)


class TestLrSchedule:
    FULL = tr.TrainConfig(batch_size=512, n_epochs=300,
                           lr_milestones=(100, 200, 250), initial_lr=1e-3,
                           lr_decay=0.1)

    def test_full_regimen_values(self):
        assert tr.lr_at_epoch(0, self.FULL) == pytest.approx(1e-3)
        assert tr.lr_at_epoch(99, self.FULL) == pytest.approx(1e-3)
        assert tr.lr_at_epoch(100, self.FULL) == pytest.approx(1e-4)
        assert tr.lr_at_epoch(250, self.FULL) == pytest.approx(1e-6)
        assert tr.lr_at_epoch(299, self.FULL) == pytest.approx(1e-6)

    def test_non_increasing_with_exact_drops(self):
        lrs = [tr.lr_at_epoch(e, self.FULL) for e in range(300)]
        drops = sum(1 for a, b in zip(lrs, lrs[1:]) if b < a)
        assert drops == 3
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            tr.lr_at_epoch(300, self.FULL)
        with pytest.raises(ValueError):
            tr.lr_at_epoch(-1, self.FULL)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            tr.TrainConfig(lr_milestones=(5, 5), n_epochs=10)
        with pytest.raises(ValueError):
            tr.TrainConfig(lr_milestones=(5, 12), n_epochs=10)
        with pytest.raises(ValueError):
            tr.TrainConfig(lr_decay=0.0)
        with pytest.raises(ValueError):
            tr.TrainConfig(batch_size=0)


class TestTrain:
    def test_single_epoch_bookkeeping(self):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 0)
        cfg = tr.TrainConfig(batch_size=8, n_epochs=1, lr_milestones=())
        res = tr.train(model, train_ds, test_ds, cfg)
        assert len(res.history) == 1
        rec = res.history[0]
        assert rec.epoch == 0 and np.isfinite(rec.train_loss)
        assert np.isfinite(rec.test_loss) and rec.lr == pytest.approx(1e-3)
        assert rec.seconds > 0

    def test_seed_reproducible_float64(self):
        histories = []
        for _ in range(2):
            train_ds, test_ds = tiny_datasets()
            model = pr.build_model(ARCH, 3)
            cfg = tr.TrainConfig(batch_size=8, n_epochs=3, lr_milestones=(2,),
                                 seed=3, dtype="float64")
            res = tr.train(model, train_ds, test_ds, cfg)
            histories.append([(r.train_loss, r.test_loss, r.lr) for r in res.history])
        assert histories[0] == histories[1]

    def test_loss_decreases(self):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 1)
        cfg = tr.TrainConfig(batch_size=16, n_epochs=8, lr_milestones=())
        res = tr.train(model, train_ds, test_ds, cfg)
        assert res.history[-1].train_loss < res.history[0].train_loss

    def test_best_state_tracked(self):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 1)
        cfg = tr.TrainConfig(batch_size=16, n_epochs=4, lr_milestones=())
        res = tr.train(model, train_ds, test_ds, cfg)
        assert res.best_test_loss == min(r.test_loss for r in res.history)
        assert res.history[res.best_epoch].test_loss == res.best_test_loss

    def test_dataset_arch_mismatch(self):
        train_ds, test_ds = tiny_datasets()
        wrong = pr.build_model(dataclasses.replace(ARCH, n_subbands=4), 0)
        with pytest.raises(ValueError, match="does not match"):
            tr.train(wrong, train_ds, test_ds, tr.TrainConfig(n_epochs=1,
                                                              lr_milestones=()))

    def test_non_finite_loss_diagnostic(self):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 0)
        with torch.no_grad():
            model.fc.weight[0, 0] = float("nan")
        cfg = tr.TrainConfig(batch_size=8, n_epochs=1, lr_milestones=())
        with pytest.raises(tr.TrainingDivergedError) as exc:
            tr.train(model, train_ds, test_ds, cfg)
        assert exc.value.epoch == 0
        assert exc.value.batch == 0

    def test_checkpoint_round_trip_same_test_loss(self, tmp_path):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 2)
        cfg = tr.TrainConfig(batch_size=16, n_epochs=2, lr_milestones=())
        res = tr.train(model, train_ds, test_ds, cfg)
        path = str(tmp_path / "m.ckpt")
        pr.save_checkpoint(res.model, path)
        back, _ = pr.load_checkpoint(path)
        x, y = tr._encode_dataset(test_ds, torch.float32)
        before = tr.evaluate_loss(res.model, x, y, 16)
        after = tr.evaluate_loss(back, x, y, 16)
        assert after == pytest.approx(before, rel=0, abs=0)

    def test_periodic_checkpoints(self, tmp_path):
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 0)
        cfg = tr.TrainConfig(batch_size=16, n_epochs=4, lr_milestones=(),
                             checkpoint_every=2)
        tr.train(model, train_ds, test_ds, cfg, out_dir=str(tmp_path))
        assert (tmp_path / "epoch_0001.ckpt").exists()
        assert (tmp_path / "epoch_0003.ckpt").exists()

    def test_first_order_descent_on_full_batch(self):
        # a plain gradient step with a vanishing rate must not increase the loss
        train_ds, test_ds = tiny_datasets()
        model = pr.build_model(ARCH, 4).double()
        x, y = tr._encode_dataset(train_ds, torch.float64)
        model.train()
        loss = tr._batch_loss(model(x), y)
        before = float(loss.detach())
        model.zero_grad()
        loss.backward()
        with torch.no_grad():
            for p in model.parameters():
                if p.grad is not None:
                    p -= 1e-9 * p.grad
            after = float(tr._batch_loss(model(x), y))
        assert after <= before + 1e-12


class TestHistoryIo:
    def test_round_trip(self, tmp_path):
        recs = [tr.EpochRecord(0, 1.5, 2.5, 1e-3, 0.1),
                tr.EpochRecord(1, 1.25, 2.25, 1e-4, 0.2)]
        path = str(tmp_path / "h.csv")
        tr.write_history(recs, path)
        back = tr.read_history(path)
        assert [(r.epoch, r.train_loss, r.test_loss, r.lr) for r in back] == \
               [(r.epoch, r.train_loss, r.test_loss, r.lr) for r in recs]

    def test_append(self, tmp_path):
        path = str(tmp_path / "h.csv")
        tr.write_history([tr.EpochRecord(0, 1.0, 2.0, 1e-3, 0.1)], path)
        tr.write_history([tr.EpochRecord(1, 0.5, 1.5, 1e-3, 0.1)], path, append=True)
        assert [r.epoch for r in tr.read_history(path)] == [0, 1]
