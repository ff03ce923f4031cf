import csv
import math
import os
import subprocess

import numpy as np
import pytest

import acclab

LJ = acclab.PairPotential.lennard_jones()


def test_exact_vacancy_spectra():
    eig, kappa, kappa_f = acclab.analytic_single_vacancy_index()
    assert eig == {-2: "2/5", -1: "24/5", 0: "4/3", 1: "24/5", 2: "2/5", 3: "9/11"}
    assert kappa == "2/7"
    assert kappa_f == pytest.approx(2 / 7, abs=1e-15)


def test_gradient_matches_central_differences():
    dom = acclab.build_domain(8, [(0, 0)])
    model = acclab.AtomisticModel(dom, LJ, np.diag([1.01, 0.99]))
    rng = np.random.default_rng(0)
    u = rng.uniform(-0.02, 0.02, model.num_dofs)
    g = model.gradient(u)
    h = 1e-6
    for k in rng.choice(model.num_dofs, 8, replace=False):
        e = np.zeros(model.num_dofs)
        e[k] = h
        fd = (model.energy(u + e) - model.energy(u - e)) / (2 * h)
        assert abs(fd - g[k]) <= 1e-6 * max(1.0, abs(g[k]))


def test_coupled_patch_test_and_two_forms():
    dom = acclab.build_domain(16, hexagonal=True)
    c = acclab.CoupledModel(dom, K=4, hK=2.0, B=np.array([[1.02, 0.01], [0.0, 0.98]]))
    u = np.zeros(c.num_dofs)
    assert np.abs(c.gradient(u)).max() <= 1e-10
    u = np.random.default_rng(1).uniform(-0.01, 0.01, c.num_dofs)
    assert c.energy_practical(u) == pytest.approx(c.energy(u), rel=1e-9)


def test_vacancy_relaxation_and_hessian_shape():
    dom = acclab.build_domain(8, [(0, 0)])
    model = acclab.AtomisticModel(dom, LJ)
    r = acclab.minimize(model, np.zeros(model.num_dofs))
    assert r.converged
    assert r.energy < model.energy(np.zeros(model.num_dofs))
    H = model.hessian(r.u)
    assert H.shape == (model.num_dofs, model.num_dofs)
    assert abs(H - H.T).max() <= 1e-14


def test_numerical_index_bounds():
    res = acclab.stability_index(acclab.build_domain(12, [(0, 0)]))
    assert 2 / 7 - 1e-3 <= res.kappa <= 1
    assert res.quotient == pytest.approx(res.kappa, abs=1e-8)


def test_error_model_closed_form():
    r = acclab.error_model(beta=3, p=2, alpha=1.5, K=8, N=128, hK=1)
    assert r.err == pytest.approx(8.0**-2 * math.sqrt(1 - 8 / 128), rel=1e-12)
    assert r.regime == 1


def test_config_round_trip_and_rejection():
    text = '[experiment]\nkind = "vacancy"\nN = 32\nK = [4]\n'
    resolved = acclab.resolved_config(text)
    assert acclab.resolved_config(resolved) == resolved
    with pytest.raises(ValueError):
        acclab.resolved_config('[experiment]\nkind = "vacancy"\nbogus = 1\n')


def test_small_region_run(tmp_path):
    cfg = tmp_path / "region.toml"
    cfg.write_text(
        '[experiment]\nkind = "stability-region"\nN = 12\nK = [4]\nh_K = [1]\n'
        "[region]\ns_steps = 3\nt_steps = 3\n"
    )
    assert acclab.run_experiment(cfg, tmp_path / "out")
    with open(tmp_path / "out" / "table.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 9
    assert (tmp_path / "out" / "config.resolved.toml").exists()


@pytest.mark.skipif("ACCLAB_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_error_model():
    out = subprocess.run([os.environ["ACCLAB_CLI"], "error-model", "--K", "8", "--N", "128"], check=True,
                         capture_output=True, text=True).stdout
    values = dict(line.split(" ", 1) for line in out.splitlines())
    assert float(values["err"]) == pytest.approx(8.0**-2 * math.sqrt(1 - 8 / 128), rel=1e-9)
