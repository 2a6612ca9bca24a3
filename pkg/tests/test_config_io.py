import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slipfsi import io
from slipfsi.config import SimConfig, parse_config, parse_config_text, serialize_config
from slipfsi.errors import CheckpointError, ConfigError
from slipfsi.solver import initial_triple, step


def test_minimal_config_uses_defaults():
    cfg = parse_config_text("[grid]\nn_r = 9\nn_theta = 16\n")
    assert (cfg.n_r, cfg.n_theta) == (9, 16)
    assert cfg.R_s == pytest.approx(1 / np.sqrt(np.pi))
    assert cfg.R_Omega == 1.5 and cfg.mu == 0.1 and cfg.beta == 1.0
    assert cfg.delta0 == pytest.approx(0.1 * (1.5 - cfg.R_s))
    assert parse_config_text("") == SimConfig()


def test_negative_beta_rejected():
    with pytest.raises(ConfigError, match="β > 0"):
        parse_config_text("[physics]\nbeta = -1.0\n")


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[grid]\nn_r = 9\n\n[physics]\nviscosity = 1.0\n")
    assert exc.value.line == 5 and "line 5" in str(exc.value)


def test_wrong_type_and_syntax_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[grid]\nn_r = 9.5\n")
    assert exc.value.line == 2
    with pytest.raises(ConfigError):
        parse_config_text("[grid\nn_r = 9\n")
    with pytest.raises(ConfigError):
        parse_config_text("[physics]\nno_slip = true\n")


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(1e-3, 10), beta=st.floats(1e-3, 1e6), n_r=st.integers(8, 200),
       dt=st.floats(0, 1), seed=st.integers(0, 2**63), motion=st.sampled_from(["free", "pinned"]))
def test_serialize_round_trip(mu, beta, n_r, dt, seed, motion):
    cfg = SimConfig(mu=mu, beta=beta, n_r=n_r, dt=dt, seed=seed, body_motion=motion)
    text = serialize_config(cfg)
    back = parse_config_text(text)
    assert back == cfg
    assert serialize_config(back) == text


def test_parse_config_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(serialize_config(SimConfig(n_r=12)))
    assert parse_config(p).n_r == 12


@pytest.fixture(scope="module")
def state():
    cfg = SimConfig(n_r=9, n_theta=16, perturbation=0.2)
    s = initial_triple(cfg)
    for _ in range(3):
        s = step(*s, cfg, dt=0.01)
    return cfg, s


def test_checkpoint_round_trip(tmp_path, state):
    cfg, (flow, rig, at) = state
    p = tmp_path / "a.ckpt"
    io.checkpoint((flow, rig, at), p, cfg)
    (f2, r2, a2), c2 = io.restore(p, with_config=True)
    assert c2 == cfg
    assert np.array_equal(f2.U.values, flow.U.values) and np.array_equal(f2.P.values, flow.P.values)
    assert np.array_equal(f2.U.ghost_lo, flow.U.ghost_lo)
    assert f2.t == flow.t and r2.t == rig.t
    assert np.array_equal(r2.Q, rig.Q) and r2.omega == rig.omega
    assert np.array_equal(a2.X, at.X) and np.array_equal(a2.X_hess, at.X_hess)
    # stepping the restored state matches stepping the original
    n1 = step(flow, rig, at, cfg, dt=0.01)
    n2 = step(f2, r2, a2, cfg, dt=0.01)
    assert np.array_equal(n1[0].U.values, n2[0].U.values)


def test_checkpoint_corruption_detected(tmp_path, state):
    cfg, s = state
    p = tmp_path / "a.ckpt"
    io.checkpoint(s, p, cfg)
    raw = p.read_bytes()
    bad = tmp_path / "bad.ckpt"

    bad.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(CheckpointError, match="magic"):
        io.restore(bad)
    bad.write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
    with pytest.raises(CheckpointError, match="version"):
        io.restore(bad)
    bad.write_bytes(raw[:20])
    with pytest.raises(CheckpointError, match="header"):
        io.restore(bad)
    bad.write_bytes(raw[:-100])
    with pytest.raises(CheckpointError, match="truncated"):
        io.restore(bad)
    flipped = bytearray(raw)
    flipped[-5] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        io.restore(bad)
    with pytest.raises(CheckpointError):
        io.restore(tmp_path / "missing.ckpt")


def test_field_dump_round_trip(tmp_path, state):
    _, (flow, _, at) = state
    for name, v in (("U", flow.U.values), ("P", flow.P.values), ("X", at.X)):
        p = tmp_path / f"{name}.txt"
        io.write_field(p, v, name, flow.t)
        back, nm, t = io.read_field(p)
        assert nm == name and t == flow.t and np.array_equal(back, v)
    lines = (tmp_path / "U.txt").read_text().splitlines()
    (tmp_path / "cut.txt").write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(CheckpointError):
        io.read_field(tmp_path / "cut.txt")


def test_csv_series_blocks(tmp_path):
    p = tmp_path / "g.csv"
    with io.CSVSeries(p, io.GAP_COLUMNS) as csv:
        for d in (0.1, 0.05):
            csv.block(f"delta={d!r}")
            csv.append((0.0, d, 0, 0, 0))
    header, blocks = io.read_csv(p)
    assert header == io.GAP_COLUMNS
    assert list(blocks) == ["delta=0.1", "delta=0.05"]
    assert blocks["delta=0.05"][0, 1] == 0.05


def test_simulate_deterministic(tmp_path):
    cfg = SimConfig(n_r=9, n_theta=16, perturbation=0.2, t_end=0.05, dt=0.01, dump_every=2)
    for d in ("a", "b"):
        io.simulate(cfg, tmp_path / d)
    for f in sorted(os.listdir(tmp_path / "a")):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    _, blocks = io.read_csv(tmp_path / "a" / "trajectory.csv")
    assert blocks[""].shape == (6, len(io.TRAJECTORY_COLUMNS))
