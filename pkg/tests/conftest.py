import time

import numpy as np
import pytest

import toy

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def toy_ds():
    return toy.scene_dataset()


@pytest.fixture(scope="session")
def toy_fit(toy_ds, tmp_path_factory):
    """Overfit toy model after 500 L2 steps, saved once for the whole session."""
    ds = toy_ds
    from voxfrac.nn.models import ModelConfig
    from voxfrac.training import FractureModel

    init = FractureModel(ModelConfig.for_resolution(ds.meta.resolution, dz=ds.dz), ds.zcodes, seed=0)
    initial = toy.dataset_l2(init, ds)
    t = time.perf_counter()
    model, trainer, losses = toy.overfit(ds)
    seconds = time.perf_counter() - t
    d = tmp_path_factory.mktemp("toy_model")
    ckpt = model.save(d / "model.gck")
    return {"model": model, "trainer": trainer, "losses": losses, "initial": initial,
            "final": toy.dataset_l2(model, ds), "checkpoint": ckpt, "seconds": seconds}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}: {msg}")
