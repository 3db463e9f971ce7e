import json
import math

import numpy as np
import pytest

from lfpp import checks, cli
from lfpp.harness import (MAX_N, ConfigError, ExperimentConfig, InsufficientDataError,
                          ResourceCapError, canonical_rows, center_grid, estimate_exponent,
                          read_rows, resolve_workers, run_crossing_experiment,
                          run_excursion_experiment, run_experiment, run_levelset_experiment,
                          run_multiscale_experiment)


def cfg(tmp_path, **kw):
    base = dict(kind="crossing", n_range=(3, 4), xi_list=(0.4,), trials=6, out=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.mark.parametrize("bad", [dict(kind="nope"), dict(trials=0), dict(n_range=(5, 4)),
                                 dict(xi_list=(-1.0,)), dict(xi_list=()), dict(u_list=(0.0,)),
                                 dict(kind="levelset", xi_list=(0.0,)), dict(master_seed=-1),
                                 dict(kind="multiscale", n_range=(5, 5), K=4)])
def test_invalid_configs(tmp_path, bad):
    with pytest.raises(ConfigError):
        cfg(tmp_path, **bad).validate()


def test_config_file_round_trip(tmp_path):
    c = cfg(tmp_path, xi_list=(0.1, 0.4))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(c.to_dict()))
    assert ExperimentConfig.load(path) == c
    assert ExperimentConfig.load(path).config_hash() == c.config_hash()
    path.write_text(json.dumps({**c.to_dict(), "extra": 1}))
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_hash_ignores_workers(tmp_path):
    assert cfg(tmp_path).config_hash() == cfg(tmp_path / "x", workers=4).config_hash()
    assert cfg(tmp_path).config_hash() != cfg(tmp_path, master_seed=1).config_hash()


def test_resource_caps(tmp_path):
    with pytest.raises(ResourceCapError):
        run_experiment(cfg(tmp_path, n_range=(3, MAX_N + 1)))
    with pytest.raises(ResourceCapError):
        run_experiment(cfg(tmp_path, max_work=10.0))
    assert not (tmp_path / "crossing.jsonl").exists()


def test_worker_env_override(monkeypatch):
    monkeypatch.setenv("LFPP_WORKERS", "3")
    assert resolve_workers(1) == 3
    monkeypatch.setenv("LFPP_WORKERS", "zero")
    with pytest.raises(ConfigError):
        resolve_workers(1)
    monkeypatch.delenv("LFPP_WORKERS")
    assert resolve_workers(2) == 2


def test_zero_xi_gives_vertex_count(tmp_path):
    res = run_crossing_experiment(cfg(tmp_path, n_range=(3, 5), xi_list=(0.0,), trials=3))
    values = {(r["n"], r["value"]) for r in res.rows}
    assert values == {(3, 1.0), (4, 3.0), (5, 6.0)}


def test_files_and_markers(tmp_path):
    res = run_crossing_experiment(cfg(tmp_path))
    lines = res.raw_path.read_text().splitlines()
    assert json.loads(lines[0])["marker"] == "incomplete"
    assert json.loads(lines[-1]) ["marker"] == "complete"
    rows, complete = read_rows(res.raw_path)
    assert complete and len(rows) == 12
    for r in rows:
        assert {"n", "xi", "seed_index", "value", "wall_time", "config_hash", "version"} <= set(r)
    canon = [json.loads(line) for line in res.canonical_path.read_text().splitlines()]
    assert canon == canonical_rows(rows)
    assert all("wall_time" not in r for r in canon)
    assert res.summary_path.read_text().startswith("n,xi,count,median_log2")
    # a truncated raw file is recognised
    trunc = tmp_path / "trunc.jsonl"
    trunc.write_text("\n".join(lines[:-1]) + "\n")
    assert not read_rows(trunc)[1]
    with pytest.raises(InsufficientDataError):
        estimate_exponent([trunc], 0.4, min_samples=1)


def test_deterministic_across_workers_and_chunks(tmp_path):
    outs = []
    for i, (workers, chunk) in enumerate([(1, 2), (2, 3), (1, 7)]):
        res = run_levelset_experiment(cfg(tmp_path / str(i), kind="levelset", u_list=(0.5, 3.0),
                                          workers=workers, chunk=chunk))
        outs.append(res.canonical_path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = run_levelset_experiment(cfg(tmp_path / "s", kind="levelset", u_list=(0.5, 3.0),
                                        master_seed=99))
    assert other.canonical_path.read_bytes() != outs[0]


def test_medians_grow_with_n(tmp_path):
    res = run_crossing_experiment(cfg(tmp_path, n_range=(4, 7), trials=40))
    med = [np.median([r["value"] for r in res.rows if r["n"] == n]) for n in range(4, 8)]
    assert all(a < b for a, b in zip(med, med[1:]))


def test_levelset_high_u(tmp_path):
    res = run_levelset_experiment(cfg(tmp_path, kind="levelset", n_range=(4, 4), u_list=(10.0,),
                                      trials=1000, chunk=100))
    assert np.mean([r["value"] for r in res.rows]) >= 0.99


def test_excursion_mean_count(tmp_path):
    res = run_excursion_experiment(cfg(tmp_path, kind="excursion", n_range=(3, 3), u_list=(1.0,),
                                       trials=300))
    counts = [r["count"] for r in res.rows]
    assert abs(np.mean(counts) - 55.5) <= 3 * math.sqrt(55.5 / len(counts))


def test_multiscale_line_count(tmp_path):
    res = run_multiscale_experiment(cfg(tmp_path, kind="multiscale", n_range=(6, 6), K=4,
                                        trials=2))
    assert len(res.rows) == 2 * len(center_grid(6, 4))
    one = run_multiscale_experiment(cfg(tmp_path / "o", kind="multiscale", n_range=(6, 6), K=4,
                                        trials=3, centers="origin"))
    assert len(one.rows) == 3 and one.rows[0]["z"] == [0, 0]


def test_kind_mismatch(tmp_path):
    with pytest.raises(ConfigError):
        run_levelset_experiment(cfg(tmp_path))


def _synthetic(xi, noise=None, per_n=40, rng=None):
    rows = []
    for n in range(3, 9):
        for t in range(per_n):
            v = 2.0 ** (0.8 * n)
            if noise is not None:
                v *= rng.uniform(*noise)
            rows.append({"n": n, "xi": xi, "seed_index": t, "value": v})
    return rows


def test_estimate_exact_power_law():
    est = estimate_exponent(_synthetic(0.5), 0.5)
    assert est.slope == pytest.approx(0.8, abs=1e-12)
    assert est.q_hat == pytest.approx(1.6, abs=1e-12)
    assert len(est.per_n) == 6


def test_estimate_noisy_power_law(rng):
    est = estimate_exponent(_synthetic(0.4, (0.5, 2.0), 1000, rng), 0.4)
    assert abs(est.slope - 0.8) <= 0.1
    assert est.slope_se > 0 and est.r2 > 0.9


def test_estimate_rejects_thin_data():
    rows = [r for r in _synthetic(0.5) if r["n"] < 5]
    with pytest.raises(InsufficientDataError, match="samples"):
        estimate_exponent(rows, 0.5)
    with pytest.raises(InsufficientDataError):
        estimate_exponent(_synthetic(0.5, per_n=10), 0.5)


def test_cli_runs(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["crossing", "--n", "3..5", "--xi", "0.1,0.4", "--trials", "30",
                     "--seed", "5", "--out", str(out)]) == 0
    assert cli.main(["estimate-q", str(out / "crossing.jsonl"), "--out", str(tmp_path / "q.csv")]) == 0
    text = capsys.readouterr().out
    assert "Q_hat" in text
    assert (tmp_path / "q.csv").read_text().startswith("xi,n,count")
    assert cli.main(["circuit-prob", "--n", "3", "--u", "1,2", "--trials", "5", "--out", str(out)]) == 0
    assert cli.main(["excursions", "--n", "3", "--u", "1", "--trials", "5", "--out", str(out)]) == 0
    assert cli.main(["multiscale", "--n", "6", "--K", "4", "--centers", "origin", "--trials", "2",
                     "--xi", "0.4", "--out", str(out)]) == 0
    assert cli.main(["sample-field", "--n", "2", "--out", str(tmp_path / "f.csv")]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["crossing", "--n", "3", "--trials", "0", "--out", str(tmp_path)]) == 2
    assert cli.main(["crossing", "--n", "3..12", "--out", str(tmp_path)]) == 3
    assert cli.main(["crossing", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "levelset", "n_range": [3, 3]}))
    assert cli.main(["crossing", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        cli.main(["crossing", "--n", "a..b"])


def test_cli_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kind": "levelset", "n_range": [3, 3], "u_list": [1.0],
                                "trials": 4, "out": str(tmp_path / "o")}))
    assert cli.main(["circuit-prob", "--config", str(path), "--seed", "3"]) == 0
    rows, complete = read_rows(tmp_path / "o" / "levelset.jsonl")
    assert complete and len(rows) == 4


def test_cli_verify_reports(monkeypatch, capsys):
    monkeypatch.setattr(checks, "ALL_CHECKS", (checks.check_covariance, checks.check_determinism))
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all(line.startswith("[PASS]") for line in out)
