"""Command-line entry point: ``lindpuf <command> [--config PATH] [--seed N] [--out PATH] [--threads N]``.

Configs are JSON documents validated against the models below; unknown keys
are rejected. Each command writes CSV (or log) files, prints a plain-text
summary and ends with one JSON status line. The exit code is 0 iff every
requested assertion passed, 1 if one failed and 2 for a bad config.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .distributions import computational_povm, tv_distance
from .dynamics import all_ones_state, amplitude_damping_family
from .experiments import (
    EnsembleModel,
    ProbabilityEstimate,
    proportion_estimate,
    csv_emit,
    fit_linear,
    frac_estimate,
    levy_bound,
    mean_tv_sweep,
    nonincreasing_within_intervals,
    qpstat_concentration,
    stream_id,
    toy_model,
)
from .linear_response import (
    QuadratureSpec,
    kappa,
    m0,
    response_matrix,
    toy_prediction,
    toy_response_closed_form,
)
from .ops import SZ, RandomStream
from .oracles import NoiseMode, QPStatOracle, StatOracle
from . import puf_a, puf_b

U64 = 2**64


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")
    seed: int = Field(0, ge=0, lt=U64)


class MeanTvSweepConfig(_Config):
    n_list: list[int] = [2, 3, 4]
    delta_grid: Optional[list[float]] = None
    delta_window: tuple[float, float] = (0.1, 0.2)
    delta_points: int = Field(10, ge=1)
    n_samples: int = Field(200, ge=2)
    gamma: float = Field(1.0, gt=0)
    t: float = Field(1.0, gt=0)
    reference: Literal["ref_dynamics", "ensemble_mean"] = "ref_dynamics"
    backend: Literal["auto", "dense", "matfree"] = "matfree"
    slope_range: Optional[tuple[float, float]] = None
    slope_check_n: Optional[int] = None

    @field_validator("n_list")
    @classmethod
    def _sizes(cls, v):
        if not v or min(v) < 1:
            raise ValueError("n_list must hold positive qubit counts")
        return v

    def grid(self) -> list[float]:
        if self.delta_grid is not None:
            return list(self.delta_grid)
        return [float(x) for x in np.linspace(*self.delta_window, self.delta_points)]


class LinresConfig(_Config):
    m: int = Field(4, ge=1, le=10)
    gamma: float = Field(1.0, ge=0)
    t: float = Field(1.0, ge=0)
    delta: float = Field(1.0, ge=0)
    nodes: int = Field(16, ge=2)
    tolerance: float = Field(1e-10, gt=0)


class ConcentrationConfig(_Config):
    m_list: list[int] = [4, 8, 16, 32]
    delta: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, gt=0)
    t: float = Field(1.0, gt=0)
    tau_list: list[float] = [0.0, 0.2]
    qp_tau: Optional[float] = None
    n_samples: int = Field(400, ge=10)
    c_par: Optional[float] = Field(None, gt=0)
    assert_trend: bool = True


class PufAConfig(_Config):
    n_qubits: int = Field(3, ge=1, le=8)
    delta: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, gt=0)
    t: float = Field(1.0, gt=0)
    l: Optional[int] = None
    tau: float = Field(0.02, ge=0)
    c0: float = Field(2.0, gt=0)
    n_chal: int = Field(32, ge=1)
    n_sessions: int = Field(100, ge=1)
    oracle_mode: Literal["exact", "uniform", "empirical"] = "exact"
    shots: Optional[int] = Field(None, ge=1)
    q_list: list[int] = [0, 2, 4]
    miss: Literal["zero", "cache_mean"] = "zero"

    @model_validator(mode="after")
    def _shots(self):
        if self.oracle_mode == "empirical" and self.shots is None:
            raise ValueError("empirical oracle mode needs 'shots'")
        return self


class PufBConfig(_Config):
    n_qubits: int = Field(1, ge=1, le=3)
    device: Literal["toy", "identity"] = "toy"
    delta: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, gt=0)
    t: float = Field(1.0, gt=0)
    tau: float = Field(0.0, ge=0)
    c0: float = Field(2.0, gt=0)
    oracle_mode: Literal["exact", "uniform"] = "exact"
    chain_samples: int = Field(200, ge=1)


class Run:
    """Collects summary lines and assertion outcomes for one command."""

    def __init__(self, name: str):
        self.name = name
        self.failures: list[str] = []
        self.checks = 0

    def say(self, line: str = "") -> None:
        print(line)

    def check(self, ok: bool, label: str) -> bool:
        self.checks += 1
        self.say(f"[{'PASS' if ok else 'FAIL'}] {label}")
        if not ok:
            self.failures.append(label)
        return ok

    def finish(self) -> int:
        status = "pass" if not self.failures else "fail"
        print(json.dumps({"command": self.name, "status": status, "checks": self.checks,
                          "failures": self.failures}))
        return 0 if not self.failures else 1


def _meta(cfg: _Config, command: str) -> dict:
    return {"command": command, "seed": cfg.seed, "config": cfg.model_dump(mode="json")}


# ---------------------------------------------------------------------------
# commands


def cmd_mean_tv_sweep(cfg: MeanTvSweepConfig, out: Path, threads: int) -> int:
    run = Run("mean-tv-sweep")
    grid = cfg.grid()
    rows = mean_tv_sweep(
        lambda n, d: toy_model(n, d, cfg.gamma, cfg.t, backend=cfg.backend),
        cfg.n_list, grid, cfg.n_samples, cfg.reference, cfg.seed, threads,
    )
    meta = _meta(cfg, "mean-tv-sweep")
    fits = {}
    for n in cfg.n_list:
        sub = [r for r in rows if r.n_qubits == n]
        try:
            f = fit_linear(sub)
            fits[str(n)] = {"slope": f.slope, "intercept": f.intercept,
                            "slope_stderr": f.slope_stderr, "r_squared": f.r_squared}
            run.say(f"N={n}: slope {f.slope:.6f} +- {f.slope_stderr:.6f}  intercept {f.intercept:.6f}"
                    f"  r2 {f.r_squared:.4f}  (first-order theory {toy_prediction(cfg.gamma, cfg.t, n, 1.0) if n > 1 else float('nan'):.6f})")
        except ValueError as exc:
            fits[str(n)] = {"error": str(exc)}
            run.say(f"N={n}: fit refused ({exc})")
    meta["fits"] = fits
    errors = [r for r in rows if r.error]
    for r in errors:
        run.say(f"row N={r.n_qubits} delta={r.delta}: {r.error}")
    csv_emit(rows, out, meta)
    run.say(f"wrote {len(rows)} rows to {out}")
    run.check(not errors, "all sweep rows evaluated")
    if cfg.slope_range is not None:
        n = cfg.slope_check_n if cfg.slope_check_n is not None else max(cfg.n_list)
        lo, hi = cfg.slope_range
        slope = fits.get(str(n), {}).get("slope")
        run.check(slope is not None and lo <= slope <= hi, f"N={n} slope {slope} in [{lo}, {hi}]")
    return run.finish()


def cmd_linres_check(cfg: LinresConfig, out: Path, threads: int) -> int:
    run = Run("linres-check")
    g_eff = cfg.gamma * cfg.delta
    fam = amplitude_damping_family(cfg.m, 1.0, g_eff)
    povm = computational_povm(cfg.m)
    resp = response_matrix(fam, cfg.t, povm, all_ones_state(cfg.m), QuadratureSpec(nodes=cfg.nodes))
    closed = toy_response_closed_form(cfg.m, g_eff, cfg.t)
    run.say("a[j, x] (quadrature)")
    run.say("  j  " + " ".join(f"{x:>9}" for x in povm.labels))
    for j, row in enumerate(resp.entries):
        run.say(f"{j:3d}  " + " ".join(f"{v:9.5f}" for v in row))
    err = float(np.max(np.abs(resp.entries - closed)))
    run.say(f"max |quadrature - closed form| = {err:.3e}")
    avg = resp.averaged_norm()
    target = g_eff * cfg.t * (1 + 1 / math.sqrt(cfg.m))
    run.say(f"(1/M) sum_x ||a^(x)|| = {avg:.15f}; expected {target:.15f}")
    if cfg.m >= 2:
        k = kappa(cfg.m)
        run.say(f"kappa_{cfg.m} = {k:.15f}")
        run.say(f"m0 = {m0(resp):.15f}")
        run.say(f"toy_prediction(delta=1) = {toy_prediction(g_eff, cfg.t, cfg.m, 1.0):.15f}")
    else:
        run.say("kappa_M is undefined for M = 1")
    rows = [{"j": j, "x": x, "quadrature": float(resp.entries[j, i]), "closed_form": float(closed[j, i])}
            for j in range(cfg.m) for i, x in enumerate(povm.labels)]
    csv_emit(rows, out, _meta(cfg, "linres-check"), ["j", "x", "quadrature", "closed_form"])
    run.check(err <= cfg.tolerance, f"coefficients match closed form within {cfg.tolerance:g}")
    run.check(abs(avg - target) <= cfg.tolerance, f"averaged-norm identity within {cfg.tolerance:g}")
    return run.finish()


def cmd_concentration(cfg: ConcentrationConfig, out: Path, threads: int) -> int:
    run = Run("concentration")
    rows = []
    frac_by_tau: dict[float, list[ProbabilityEstimate]] = {tau: [] for tau in cfg.tau_list}
    qp_by_tau: dict[float, list[ProbabilityEstimate]] = {tau: [] for tau in cfg.tau_list}
    phi = np.array([1.0, -1.0])  # (-1)^{x_1} on the first site
    sigma = np.diag([0.0, 1.0]).astype(complex)
    for mi, m in enumerate(cfg.m_list):
        model = toy_model(m, cfg.delta, cfg.gamma, cfg.t, observed=(0,))
        lip = cfg.t * cfg.delta * model.family.c_g
        for ti, tau in enumerate(cfg.tau_list):
            seed = cfg.seed + 1000 * mi + ti  # distinct but reproducible per (M, tau)
            fr = frac_estimate(model, phi, tau, cfg.n_samples, seed=seed, threads=threads)
            qtau = tau if cfg.qp_tau is None else cfg.qp_tau
            qp = qpstat_concentration(model, sigma, SZ, qtau, cfg.n_samples, seed=seed, threads=threads)
            frac_by_tau[tau].append(fr)
            qp_by_tau[tau].append(qp)
            row = {"m": m, "tau": tau, "frac": fr.estimate, "frac_low": fr.low, "frac_high": fr.high,
                   "qp_tau": qtau, "qp": qp.estimate, "qp_low": qp.low, "qp_high": qp.high,
                   "n_samples": cfg.n_samples}
            if cfg.c_par is not None:
                row["levy_bound"] = levy_bound(m, tau, lip, cfg.c_par) if lip > 0 else float("nan")
            rows.append(row)
            run.say(f"M={m:3d} tau={tau:.3f}  frac {fr.estimate:.4f} [{fr.low:.4f}, {fr.high:.4f}]"
                    f"  qpstat {qp.estimate:.4f} [{qp.low:.4f}, {qp.high:.4f}]")
    csv_emit(rows, out, _meta(cfg, "concentration"))
    for tau in cfg.tau_list:
        if tau == 0:
            run.check(all(e.estimate == 1.0 for e in frac_by_tau[tau]), "tau=0 rows have frac = 1")
        elif cfg.assert_trend:
            run.check(nonincreasing_within_intervals(frac_by_tau[tau]), f"frac nonincreasing in M at tau={tau}")
            run.check(nonincreasing_within_intervals(qp_by_tau[tau]), f"qpstat nonincreasing in M at tau={tau}")
    return run.finish()


def _oracle_mode(kind: str, shots: int | None) -> NoiseMode:
    if kind == "empirical":
        return NoiseMode.empirical(shots)
    return NoiseMode(kind)


def puf_a_device(cfg: PufAConfig):
    """A toy-model device with one fixed theta drawn from the seed.

    theta is folded into the positive orthant so every damping rate is
    nonnegative and the device distribution is physical.
    """
    model = toy_model(cfg.n_qubits, cfg.delta, cfg.gamma, cfg.t)
    theta = np.abs(model.family.sample_theta(RandomStream(cfg.seed, stream_id(0, 0, 0))))
    return model, theta, model.distribution(theta)


def cmd_puf_a_demo(cfg: PufAConfig, out: Path, threads: int) -> int:
    run = Run("puf-a-demo")
    _, _, dist = puf_a_device(cfg)
    enc = puf_a.default_encoding(dist.labels, cfg.l)
    fp = puf_a.enroll(dist, 0.0, 0.05)
    mode = _oracle_mode(cfg.oracle_mode, cfg.shots)
    run.say(f"device: N={cfg.n_qubits}, delta={cfg.delta}, |X|={len(dist)}, L={enc.l}, tau={cfg.tau}")
    rows, log = [], []

    def sessions(kind: int, q: int, make_responder, label: str):
        passes = 0
        for s in range(cfg.n_sessions):
            stream = RandomStream(cfg.seed, stream_id(kind, q, s + 1))
            responder = make_responder(stream)
            tr = puf_a.run_authentication(fp, responder, enc, cfg.tau, cfg.n_chal, stream.child(1),
                                         cfg.c0)
            passes += tr.verdict
            log.append(f"# {label} q={q} session={s} verdict={int(tr.verdict)}\n{tr.to_log()}")
        est = proportion_estimate(passes, cfg.n_sessions)
        rows.append({"prover": label, "q": q, "passes": passes, "sessions": cfg.n_sessions,
                     "rate": est.estimate, "low": est.low, "high": est.high})
        run.say(f"{label:>14} q={q:<5d} pass rate {est.estimate:.3f} [{est.low:.3f}, {est.high:.3f}]")
        return est

    honest = sessions(1, 0, lambda st: puf_a.honest_prover(
        StatOracle(dist, cfg.tau, mode, rng=st.child(2)), enc), "honest")
    for q in cfg.q_list:
        sessions(2, q, lambda st, q=q: puf_a.TableLookupAdversary(
            StatOracle(dist, cfg.tau, mode, budget=q, rng=st.child(2)), enc, q, st.child(3), cfg.miss),
            "table_lookup")
    rec_oracle = StatOracle(dist, cfg.tau, mode, rng=RandomStream(cfg.seed, stream_id(3, 0, 0)))
    responder, d_hat = puf_a.reconstruction_adversary(rec_oracle, enc)
    tv = tv_distance(d_hat, dist)
    run.say(f"reconstruction: {rec_oracle.count} queries, tv = {tv:.3e}"
            f" (bound sqrt|X| tau = {math.sqrt(len(dist)) * cfg.tau:.3e})")
    rec = sessions(3, rec_oracle.count, lambda st: responder, "reconstruction")

    csv_emit(rows, out, {**_meta(cfg, "puf-a-demo"), "reconstruction_tv": tv})
    log_path = out.with_suffix(".log")
    log_path.write_text("".join(log))
    run.say(f"wrote {out} and {log_path}")
    if cfg.oracle_mode != "empirical":
        run.check(honest.estimate == 1.0, "honest prover always accepted")
    if cfg.oracle_mode == "exact":
        run.check(tv <= 1e-10 and rec.estimate == 1.0, "exact reconstruction is perfect and accepted")
    run.check(tv <= math.sqrt(len(dist)) * cfg.tau * 1.01 + 1e-10 or cfg.oracle_mode == "empirical",
              "reconstruction tv within sqrt|X| tau")
    return run.finish()


def cmd_puf_b_demo(cfg: PufBConfig, out: Path, threads: int) -> int:
    run = Run("puf-b-demo")
    n, d = cfg.n_qubits, 2**cfg.n_qubits
    basis = puf_b.pauli_tomographic_basis(n)
    model = EnsembleModel(amplitude_damping_family(n, cfg.delta, cfg.gamma),
                          all_ones_state(n), computational_povm(n), cfg.t, "dense")
    if cfg.device == "identity":
        theta = np.zeros(n)
        theta[0] = 1.0
        model = EnsembleModel(amplitude_damping_family(n, 0.0, cfg.gamma), model.rho_in,
                              model.povm, cfg.t, "dense")
    else:
        theta = model.family.sample_theta(RandomStream(cfg.seed, stream_id(0, 0, 0)))
    channel = model.channel(theta)
    mode = NoiseMode(cfg.oracle_mode)
    oracle = QPStatOracle(channel, cfg.tau, mode, extended=True, rng=RandomStream(cfg.seed, stream_id(1, 0, 0)))
    y = puf_b.fingerprint(oracle, basis)
    run.say(f"device: {cfg.device}, n={n}, d={d}, setup queries {oracle.count}")
    run.check(oracle.count == d**4, f"setup query counter equals d^4 = {d**4}")
    if cfg.device == "identity":
        run.check(np.max(np.abs(y.entries - np.eye(d * d))) <= 1e-12 + cfg.tau,
                  "identity fingerprint is the identity (within tau)")

    prover = QPStatOracle(channel, cfg.tau, mode, extended=True, rng=RandomStream(cfg.seed, stream_id(2, 0, 0)))
    verdict, worst = puf_b.verify(y, puf_b.honest_responses(prover, basis), cfg.tau, cfg.c0)
    run.say(f"honest verification: worst entry {worst:.3e} (threshold {cfg.c0 * cfg.tau:.3e})")
    run.check(verdict, "honest prover accepted")

    exact = puf_b.exact_fingerprint(channel.matrix, basis)
    residual = float(np.max(np.abs(puf_b.reconstruct_channel(exact, basis) - channel.matrix)))
    run.say(f"reconstruction round-trip residual {residual:.3e}")
    run.check(residual <= 1e-10, "exact fingerprint round-trip within 1e-10")

    other = model.channel(model.family.sample_theta(RandomStream(cfg.seed, stream_id(4, 0, 0))))
    rep = puf_b.norm_chain_check(channel.matrix - other.matrix, basis,
                                 RandomStream(cfg.seed, stream_id(5, 0, 0)), cfg.chain_samples, strict=False)
    run.say(f"norm chain: lb_1to1 {rep.lb_1to1:.6f}, tom_can {rep.tom_can:.6f}, ratio {rep.ratio:.6f}")
    run.check(rep.holds, "||T||_1->1 <= d^(5/2) ||T||_tom,can")

    meta = {**_meta(cfg, "puf-b-demo"), "verdict": verdict, "worst": worst,
            "roundtrip_residual": residual, "lb_1to1": rep.lb_1to1, "tom_can": rep.tom_can,
            "queries": d**4}
    puf_b.write_fingerprint_csv(y, basis, out, meta)
    run.say(f"wrote {out}")
    return run.finish()


COMMANDS = {
    "mean-tv-sweep": (MeanTvSweepConfig, cmd_mean_tv_sweep),
    "linres-check": (LinresConfig, cmd_linres_check),
    "concentration": (ConcentrationConfig, cmd_concentration),
    "puf-a-demo": (PufAConfig, cmd_puf_a_demo),
    "puf-b-demo": (PufBConfig, cmd_puf_b_demo),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindpuf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="overrides the config seed (0 <= seed < 2^64)")
    common.add_argument("--out", type=Path, help="output CSV path")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sample loops")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def load_config(model: type[_Config], path: Path | None, seed: int | None) -> _Config:
    data = {}
    if path is not None:
        data = json.loads(path.read_text())
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
    if seed is not None:
        data["seed"] = seed
    return model.model_validate(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    model, fn = COMMANDS[args.command]
    try:
        cfg = load_config(model, args.config, args.seed)
    except ValidationError as exc:
        for e in exc.errors():
            loc = ".".join(str(p) for p in e["loc"]) or "<root>"
            print(f"config error at {loc}: {e['msg']}", file=sys.stderr)
        print(json.dumps({"command": args.command, "status": "config_error",
                          "fields": [".".join(str(p) for p in e["loc"]) or "<root>" for e in exc.errors()]}))
        return 2
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        print(json.dumps({"command": args.command, "status": "config_error", "fields": []}))
        return 2
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    out = args.out or Path(f"{args.command.replace('-', '_')}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    return fn(cfg, out, args.threads)


if __name__ == "__main__":
    sys.exit(main())
