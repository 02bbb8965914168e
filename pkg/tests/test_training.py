import csv

import numpy as np
import pytest

import toy
from voxfrac import io
from voxfrac.grid import GridMeta
from voxfrac.impulse import sample_normal_code
from voxfrac.nn.models import ModelConfig
from voxfrac.training import (Dataset, FractureModel, NumericalError, TrainConfig, Trainer, closest_sample,
                              predict, train)


def tiny_dataset(n=3, r=8, dz=4, seed=0):
    rng = np.random.default_rng(seed)
    m = GridMeta(r)
    return Dataset(m, 100.0, rng.uniform(-1, 1, (n, 7)), rng.uniform(-0.5, 0.5, (n, r, r, r)),
                   np.stack([sample_normal_code(i, dz) for i in range(n)]))


def tiny_model(ds, seed=0):
    return FractureModel(ModelConfig.for_resolution(ds.meta.resolution, c0=16, dz=ds.dz), ds.zcodes, seed=seed)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=4)
    with pytest.raises(ValueError):
        TrainConfig(clip=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_decay=1.5)
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_json({"epoch": 3})
    c = TrainConfig(epochs=3, lr=1e-3)
    assert TrainConfig.from_json(c.to_json()) == c


def test_dataset_validation():
    ds = tiny_dataset()
    with pytest.raises(ValueError):
        Dataset(ds.meta, 100.0, ds.v_norm * 3, ds.fields, ds.zcodes)
    with pytest.raises(ValueError):
        Dataset(ds.meta, 100.0, ds.v_norm[:2], ds.fields, ds.zcodes)


def test_dataset_roundtrip(tmp_path):
    ds = tiny_dataset()
    path = ds.save(tmp_path)
    back = Dataset.load(path)
    assert np.array_equal(back.fields, ds.fields)
    assert np.array_equal(back.v_norm, ds.v_norm)
    assert np.array_equal(back.zcodes, ds.zcodes)
    assert back.meta == ds.meta


def test_l2_fixed_point():
    ds = tiny_dataset()
    ds.fields[:] = 0
    model = tiny_model(ds)
    for p in model.generator.parameters():
        p.data[:] = 0
    tr = Trainer(model, ds, TrainConfig())
    assert tr.l2_step(0) == 0.0
    for p in model.generator.parameters() + model.encoder.parameters() + [model.zcodes[0]]:
        assert p.grad is None or not p.grad.any()


def test_l2_moves_only_its_code():
    ds = tiny_dataset()
    model = tiny_model(ds)
    before = model.code_matrix().copy()
    Trainer(model, ds, TrainConfig(lr_z=1e-2)).l2_step(1)
    after = model.code_matrix()
    assert not np.array_equal(before[1], after[1])
    assert np.array_equal(before[[0, 2]], after[[0, 2]])


def test_l2_nan_aborts():
    ds = tiny_dataset()
    model = tiny_model(ds)
    model.generator.params["proj.W"].data[:] = np.nan
    with pytest.raises(NumericalError):
        Trainer(model, ds, TrainConfig()).l2_step(0)


def test_lr_decay_applied():
    ds = tiny_dataset()
    tr = Trainer(tiny_model(ds), ds, TrainConfig(lr=1e-3, lr_decay=0.5))
    tr.l2_step(0)
    tr.l2_step(1)
    assert tr.opt_g.lr == pytest.approx(2.5e-4)
    assert tr.opt_d.lr == pytest.approx(1e-3)


def test_closest_sample_examples():
    keys = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    assert closest_sample(keys, keys[2]) == 2
    assert closest_sample(keys[:1], [50.0, -7.0]) == 0
    q = np.zeros(2)
    keys = np.array([[0.5, 0.0], [0.0, 0.2], [0.9, 0.0]])
    assert closest_sample(keys, q) == 1
    with pytest.raises(ValueError):
        closest_sample(np.zeros((0, 2)), q)


def test_wgan_precondition_clip_and_encoder_lock():
    ds = tiny_dataset()
    model = tiny_model(ds)
    tr = Trainer(model, ds, TrainConfig(clip=0.01, n_critic=5))
    with pytest.raises(RuntimeError):
        tr.wgan_step()
    for i in range(len(ds)):
        tr.l2_step(i)
    enc = {k: v.data.copy() for k, v in model.encoder.params.items()}
    codes = model.code_matrix().copy()
    gen0 = model.generator.params["proj.W"].data.copy()
    for _ in range(3):
        ld, lg = tr.wgan_step()
        assert np.isfinite(ld) and np.isfinite(lg)
        assert model.critic.max_abs_weight() <= 0.01
    for k, v in model.encoder.params.items():
        assert np.array_equal(v.data, enc[k])
    assert np.array_equal(model.code_matrix(), codes)
    assert not np.array_equal(model.generator.params["proj.W"].data, gen0)
    assert model.critic_updates == 15 and model.wgan_steps == 3


def test_train_epochs_zero_is_init(tmp_path):
    ds = tiny_dataset()
    mc = ModelConfig.for_resolution(8, c0=16, dz=4)
    model, rows = train(ds, TrainConfig(epochs=0, seed=3), mc, out_dir=tmp_path)
    assert rows == []
    init = FractureModel(mc, ds.zcodes, seed=3).tensors()
    saved = io.read_checkpoint(tmp_path / "model.gck")
    assert list(saved) == list(init)
    for k in init:
        assert np.array_equal(saved[k], init[k])


def test_train_deterministic_and_metrics(tmp_path):
    ds = tiny_dataset()
    mc = ModelConfig.for_resolution(8, c0=16, dz=4)
    for d in ("a", "b"):
        train(ds, TrainConfig(epochs=2, seed=1), mc, out_dir=tmp_path / d)
    assert (tmp_path / "a" / "model.gck").read_bytes() == (tmp_path / "b" / "model.gck").read_bytes()
    with open(tmp_path / "a" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == ["0", "1"]
    assert all(np.isfinite(float(r["critic_loss"])) for r in rows)


def test_checkpoint_roundtrip_keeps_codes(tmp_path):
    ds = tiny_dataset()
    model = tiny_model(ds)
    tr = Trainer(model, ds, TrainConfig(lr_z=0.1))
    for i in range(3):
        tr.l2_step(i)
    model.save(tmp_path / "m.gck")
    back = FractureModel.load(tmp_path / "m.gck")
    assert np.array_equal(back.code_matrix(), model.code_matrix())
    assert back.l2_steps == 3
    v = ds.v_norm[0]
    assert np.array_equal(predict(back, v, seed=4).values, predict(model, v, seed=4).values)


def test_trainer_mismatch():
    ds = tiny_dataset()
    other = tiny_dataset(n=2)
    with pytest.raises(ValueError):
        Trainer(tiny_model(other), ds, TrainConfig())


def test_predict_contract():
    ds = tiny_dataset()
    model = tiny_model(ds)
    a = predict(model, ds.v_norm[0], seed=9)
    b = predict(model, ds.v_norm[0], seed=9)
    assert np.array_equal(a.values, b.values)
    assert a.meta.resolution == 8
    assert np.abs(a.values).max() <= 1
    with pytest.raises(ValueError):
        predict(model, np.zeros(6), seed=0)
    with pytest.raises(ValueError):
        predict(model, ds.v_norm[0], z=np.zeros(8))


def test_latents_match_training_forward():
    ds = tiny_dataset()
    model = tiny_model(ds)
    from voxfrac.nn.autograd import Tensor
    enc = model.encoder(Tensor(ds.v_norm)).data
    assert np.allclose(model.latents(ds.v_norm), enc, atol=1e-5)


def test_overfit_reconstruction(toy_ds, toy_fit):
    """The overfit toy model reproduces its training targets at the stored codes."""
    model = toy_fit["model"]
    for i in range(len(toy_ds)):
        f = predict(model, toy_ds.v_norm[i], z=model.zcodes[i].data).values
        assert np.abs(f - toy_ds.fields[i]).mean() <= 0.05


def test_toy_loss_windows(toy_fit):
    w = toy_fit["losses"].reshape(-1, toy.WINDOW).mean(1)
    assert np.all(np.diff(w) < 0)
    assert toy_fit["final"] <= 0.1 * toy_fit["initial"]
