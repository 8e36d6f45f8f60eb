"""Scenario runner writing CSV series and a JSON run summary.

Usage::

    lossy-cavity analytic --config fig2.cfg --out-dir out/
    lossy-cavity trajectories --config fig2.cfg --n 100000 --seed 7 --out-dir out/
    lossy-cavity oracle --out-dir out/ --step 0.01
    lossy-cavity pulse --mode truncated --tau half-rabi --observe-time 7 --out-dir out/
    lossy-cavity sweep-tau --tau-stop 5 --tau-points 501 --out-dir out/

All rates are given relative to kappa = 1.  Config files hold one
``key = value`` per line; command-line flags override file values.

Exit codes: 0 success, 1 configuration error, 2 numerical validation failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analytic, lindblad, pulse, trajectory
from .model import BasisState, DensityMatrix3, SystemParams, compute_omega

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICS = 2


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class ValidationError(RuntimeError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ScenarioConfig:
    two_g_over_kappa: float = 10.0
    delta_over_kappa: float = 0.1
    kappa1_over_kappa: float = 0.9
    gamma_over_kappa: float = 0.5
    mode: str = "continuous"
    tau: str = "half-rabi"
    horizon: float = 10.0
    grid_points: int = 2000
    n: Optional[int] = None
    seed: Optional[int] = None
    eta: float = 1.0
    detector_t: Optional[float] = None
    observe_time: Optional[float] = None
    z_min: Optional[float] = None
    z_max: Optional[float] = None
    c: float = 1.0
    compare_gamma0: bool = False
    step: Optional[float] = None
    tau_start: float = 0.0
    tau_stop: float = 10.0
    tau_points: int = 1001
    threads: int = field(default=1, metadata={"echo": False})

    # -- construction -------------------------------------------------------

    @classmethod
    def field_types(cls) -> dict:
        types = {}
        for f in dataclasses.fields(cls):
            t = str(f.type)
            if "bool" in t:
                types[f.name] = _parse_bool
            elif "int" in t:
                types[f.name] = int
            elif "float" in t:
                types[f.name] = float
            else:
                types[f.name] = str
        return types

    def update(self, values: dict) -> None:
        types = self.field_types()
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(key, "unknown configuration key")
            if raw is None:
                continue
            if isinstance(raw, str):
                try:
                    value = types[key](raw.strip())
                except ValueError as exc:
                    raise ConfigError(key, f"cannot parse {raw!r} ({exc})") from None
            else:
                value = raw
            setattr(self, key, value)

    def validate(self) -> None:
        for name in ("two_g_over_kappa", "delta_over_kappa", "kappa1_over_kappa",
                     "gamma_over_kappa", "horizon", "eta", "c", "tau_start", "tau_stop"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        for name in ("two_g_over_kappa", "gamma_over_kappa"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be nonnegative")
        if not 0.0 <= self.kappa1_over_kappa <= 1.0:
            raise ConfigError("kappa1_over_kappa", "must lie in [0, 1]")
        if self.mode not in ("continuous", "truncated"):
            raise ConfigError("mode", "must be 'continuous' or 'truncated'")
        if not self.horizon > 0:
            raise ConfigError("horizon", "must be positive")
        if self.grid_points < 2:
            raise ConfigError("grid_points", "must be at least 2")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta", "must lie in [0, 1]")
        if self.detector_t is not None and not self.detector_t > 0:
            raise ConfigError("detector_t", "must be positive")
        if not self.c > 0:
            raise ConfigError("c", "must be positive")
        if self.threads < 1:
            raise ConfigError("threads", "must be at least 1")
        if self.step is not None and not self.step > 0:
            raise ConfigError("step", "must be positive")
        if self.z_min is not None and self.z_min < 0:
            raise ConfigError("z_min", "must be nonnegative")
        if self.tau_points < 1:
            raise ConfigError("tau_points", "must be at least 1")
        if self.tau_stop < self.tau_start or self.tau_start < 0:
            raise ConfigError("tau_stop", "tau grid must be nonnegative and ascending")
        if self.mode == "truncated":
            self.resolve_tau()

    # -- derived quantities -------------------------------------------------

    def params(self) -> SystemParams:
        return SystemParams.from_ratios(
            self.two_g_over_kappa,
            self.delta_over_kappa,
            self.kappa1_over_kappa,
            self.gamma_over_kappa,
        )

    def resolve_tau(self, params: SystemParams | None = None) -> float:
        params = params or self.params()
        text = self.tau.strip().lower()
        if text in ("half-rabi", "full-rabi"):
            omega = abs(compute_omega(params))
            if omega == 0:
                raise ConfigError("tau", "Rabi period undefined for Omega = 0")
            return (math.pi if text == "half-rabi" else 2.0 * math.pi) / omega
        try:
            value = float(text)
        except ValueError:
            raise ConfigError("tau", "expected a number, 'half-rabi' or 'full-rabi'") from None
        if not value >= 0:
            raise ConfigError("tau", "must be nonnegative")
        return value

    def system(self):
        params = self.params()
        if self.mode == "truncated":
            return analytic.TruncatedScenario(params, self.resolve_tau(params))
        return params

    def time_grid(self) -> np.ndarray:
        """Uniform grid on [0, horizon] with at least 40 points per Rabi period."""
        omega = abs(compute_omega(self.params()))
        n = self.grid_points
        if omega > 0:
            n = max(n, math.ceil(self.horizon * omega / (2 * math.pi) * 40) + 1)
        return np.linspace(0.0, self.horizon, n)

    def echo(self) -> list[tuple[str, str]]:
        rows = []
        for f in dataclasses.fields(self):
            if f.metadata.get("echo", True):
                rows.append((f.name, "" if getattr(self, f.name) is None else str(getattr(self, f.name))))
        return rows


def read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}", "expected 'key = value'")
            key, value = (s.strip() for s in text.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


# -- output helpers -----------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: str, config: ScenarioConfig, header: list[str], columns: list, extra: dict | None = None) -> None:
    """CSV with a '#' block echoing the configuration, LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in config.echo():
            fh.write(f"# {key} = {value}\n")
        for key, value in (extra or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def write_summary(path: str, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _base_summary(command: str, config: ScenarioConfig, started: float) -> dict:
    return {
        "command": command,
        "seed": config.seed,
        "config": dict(config.echo()),
        "wall_clock_s": time.perf_counter() - started,
    }


# -- commands -----------------------------------------------------------------

def cmd_analytic(config: ScenarioConfig, out_dir: str) -> dict:
    started = time.perf_counter()
    params = config.params()
    t = config.time_grid()
    bundle = analytic.populations_and_cumulative(params, t)
    write_csv(os.path.join(out_dir, "populations.csv"), config,
              ["kt", "p_a", "p_b", "p_c"], [t, bundle.p_a, bundle.p_b, bundle.p_yes])
    write_csv(os.path.join(out_dir, "cumulative.csv"), config,
              ["kt", "p_ext", "p_abs", "p_spo", "p_yes"],
              [t, bundle.p_ext, bundle.p_abs, bundle.p_spo, bundle.p_jumped])

    summary = _base_summary("analytic", config, started)
    if config.mode == "truncated":
        sc = config.system()
        write_csv(os.path.join(out_dir, "truncated.csv"), config,
                  ["kt", "p_in", "p_ext_bar"], [t, analytic.p_in(sc, t), analytic.p_ext_bar(sc, t)],
                  extra={"ktau": repr(sc.tau)})
        budget = analytic.truncated_budget(sc)
        summary.update(tau=sc.tau, p_ext_inf=budget.p_ext_bar_inf, p_abs_inf=budget.p_abs_inf,
                       p_spo_inf=budget.p_spo_tau, alpha_tau_sq=budget.alpha_tau_sq,
                       budget_total=budget.total)
        total = budget.total
    else:
        ext, ab, spo = analytic.asymptotic_budget(params)
        summary.update(p_ext_inf=ext, p_abs_inf=ab, p_spo_inf=spo, budget_total=ext + ab + spo)
        total = ext + ab + spo
    summary["wall_clock_s"] = time.perf_counter() - started
    write_summary(os.path.join(out_dir, "summary.json"), summary)
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"probability budget sums to {total}, not 1")
    return summary


def cmd_trajectories(config: ScenarioConfig, out_dir: str) -> dict:
    started = time.perf_counter()
    if config.n is None or config.n < 1:
        raise ConfigError("n", "number of trajectories must be at least 1")
    if config.seed is None:
        raise ConfigError("seed", "a master seed is required")
    system = config.system()
    t = config.time_grid()
    ens = trajectory.run_ensemble(system, config.n, t, config.seed, threads=config.threads)
    write_csv(os.path.join(out_dir, "ensemble.csv"), config,
              ["kt", "p_a", "p_b", "p_c", "se_a", "se_b", "se_c"],
              [t, ens.est_p_a, ens.est_p_b, ens.est_p_c, ens.se_a, ens.se_b, ens.se_c])

    bin_width = config.detector_t or config.horizon / 100.0
    hists = [trajectory.click_histogram(ens, ch, bin_width) for ch in trajectory.JumpChannel]
    edges = hists[0].edges
    write_csv(os.path.join(out_dir, "clicks.csv"), config,
              ["kt_lo", "kt_hi", "n_ext", "n_abs", "n_spo", "rate_ext", "rate_abs", "rate_spo"],
              [edges[:-1], edges[1:]] + [h.counts for h in hists] + [h.density for h in hists])

    summary = _base_summary("trajectories", config, started)
    summary["n_trajectories"] = ens.n_trajectories
    summary["channel_counts"] = {ch.name.lower(): c for ch, c in ens.counts.items()}
    summary["channel_fractions"] = {ch.name.lower(): f for ch, f in ens.channel_fractions().items()}
    if isinstance(system, analytic.TruncatedScenario):
        b = analytic.truncated_budget(system)
        summary.update(tau=system.tau, p_ext_inf=b.p_ext_bar_inf, p_abs_inf=b.p_abs_inf,
                       p_spo_inf=b.p_spo_tau, alpha_tau_sq=b.alpha_tau_sq)
    else:
        ext, ab, spo = analytic.asymptotic_budget(system)
        summary.update(p_ext_inf=ext, p_abs_inf=ab, p_spo_inf=spo)
    summary["threads"] = config.threads
    summary["wall_clock_s"] = time.perf_counter() - started
    write_summary(os.path.join(out_dir, "summary.json"), summary)
    return summary


ORACLE_TOLERANCE = 1e-6
MAX_RK4_STEPS = 10_000_000


def cmd_oracle(config: ScenarioConfig, out_dir: str) -> dict:
    started = time.perf_counter()
    params = config.params()
    gen = lindblad.LindbladGenerator(params)
    step = config.step if config.step is not None else gen.default_step()
    if step > gen.step_ceiling() * (1 + 1e-12):
        raise ConfigError("step", f"{step:g} exceeds the RK4 ceiling {gen.step_ceiling():g}")
    if math.isfinite(step) and config.horizon / step > MAX_RK4_STEPS:
        raise ValidationError(f"integration would need more than {MAX_RK4_STEPS} steps")
    t = config.time_grid()
    rho = lindblad.integrate(gen, DensityMatrix3.pure(BasisState.A), t, step=step)
    ref = lindblad.analytic_density(params, t)
    dev_aa = np.abs(rho[:, 0, 0] - ref[:, 0, 0])
    dev_bb = np.abs(rho[:, 1, 1] - ref[:, 1, 1])
    dev_ab = np.abs(rho[:, 0, 1] - ref[:, 0, 1])
    dev_cc = np.abs(rho[:, 2, 2] - ref[:, 2, 2])
    max_dev = np.max(np.stack([dev_aa, dev_bb, dev_ab, dev_cc]), axis=0)
    drift = np.abs(np.trace(rho, axis1=1, axis2=2) - 1.0)
    write_csv(os.path.join(out_dir, "oracle_vs_analytic.csv"), config,
              ["kt", "dev_aa", "dev_bb", "dev_ab", "dev_cc", "max_abs_dev", "trace_drift"],
              [t, dev_aa, dev_bb, dev_ab, dev_cc, max_dev, drift],
              extra={"rk4_step": repr(step)})
    summary = _base_summary("oracle", config, started)
    summary.update(rk4_step=step, max_abs_dev=float(np.max(max_dev)), max_trace_drift=float(np.max(drift)))
    write_summary(os.path.join(out_dir, "summary.json"), summary)
    if summary["max_abs_dev"] > ORACLE_TOLERANCE:
        raise ValidationError(f"oracle deviation {summary['max_abs_dev']:.3g} exceeds {ORACLE_TOLERANCE:g}")
    return summary


def _envelope_for(config: ScenarioConfig, params: SystemParams, tau: float | None):
    if tau is None:
        return pulse.envelope_continuous(params)
    return pulse.envelope_truncated(analytic.TruncatedScenario(params, tau))


def cmd_pulse(config: ScenarioConfig, out_dir: str) -> dict:
    started = time.perf_counter()
    params = config.params()
    if params.kappa1 == 0.0:
        raise ConfigError("kappa1_over_kappa", "no extracted mode (kappa1 = 0)")
    tau = config.resolve_tau(params) if config.mode == "truncated" else None
    env = _envelope_for(config, params, tau)
    extra = {"ktau": repr(tau) if tau is not None else "inf"}

    if config.observe_time is not None:
        t_obs = config.observe_time
        z_lo = 0.0 if config.z_min is None else config.z_min
        z_hi = config.c * t_obs if config.z_max is None else config.z_max
        if z_hi < z_lo:
            raise ConfigError("z_max", "must not be below z_min")
        z = np.linspace(z_lo, z_hi, config.grid_points)
        t_r = t_obs - z / config.c
        header = ["kz_c", "kt_r", "epsilon_scaled"]
        columns = [z / config.c, t_r, env.scaled(t_r)]
        if config.compare_gamma0:
            env0 = _envelope_for(config, params.replace(gamma=0.0), tau)
            header.append("epsilon_scaled_gamma0")
            columns.append(env0.scaled(t_r))
        extra["kt"] = repr(t_obs)
    else:
        t = config.time_grid()
        header = ["kt", "epsilon_scaled", "epsilon", "phase"]
        columns = [t, env.scaled(t), env(t), pulse._phase(env.scenario, t)]
        if config.detector_t is not None:
            header.append("click_prob")
            columns.append(pulse.detector_response(env, config.eta, config.detector_t, t))
    write_csv(os.path.join(out_dir, "envelope.csv"), config, header, columns, extra=extra)

    summary = _base_summary("pulse", config, started)
    summary.update(p_ext_inf=env.p_ext_inf, normalization=env.normalization(),
                   tau=tau, omega_abs=abs(compute_omega(params)))
    if config.compare_gamma0 and config.observe_time is not None:
        summary["p_ext_inf_gamma0"] = env0.p_ext_inf
    summary["wall_clock_s"] = time.perf_counter() - started
    write_summary(os.path.join(out_dir, "summary.json"), summary)
    if abs(summary["normalization"] - 1.0) > 1e-6:
        raise ValidationError(f"envelope normalization {summary['normalization']} differs from 1")
    return summary


def sweep_tau(params: SystemParams, taus) -> dict:
    """Budget decomposition 1 = p_ext_bar(inf) + |alpha(tau)|^2 + p_spo(tau) + p_abs(inf) per tau."""
    taus = np.asarray(taus, dtype=float)
    ib, ia = analytic.cumulative_integrals(params, taus)
    a, b = analytic.alpha_beta(params, taus)
    a2, b2 = np.abs(a) ** 2, np.abs(b) ** 2
    k = params.kappa
    return {
        "ktau": taus,
        "p_ext_bar_inf": params.kappa1 * ib + params.kappa1 / k * b2,
        "p_spo_tau": params.gamma * ia,
        "p_abs_inf": params.kappa2 * ib + params.kappa2 / k * b2,
        "alpha_tau_sq": a2,
    }


def cmd_sweep_tau(config: ScenarioConfig, out_dir: str) -> dict:
    started = time.perf_counter()
    params = config.params()
    if params.kappa == 0:
        raise ConfigError("kappa", "sweep needs kappa > 0")
    taus = np.linspace(config.tau_start, config.tau_stop, config.tau_points)
    rows = sweep_tau(params, taus)
    total = rows["p_ext_bar_inf"] + rows["alpha_tau_sq"] + rows["p_spo_tau"] + rows["p_abs_inf"]
    names = ["ktau", "p_ext_bar_inf", "p_spo_tau", "p_abs_inf", "alpha_tau_sq"]
    write_csv(os.path.join(out_dir, "sweep.csv"), config, names + ["total"],
              [rows[k] for k in names] + [total])
    summary = _base_summary("sweep-tau", config, started)
    best = int(np.argmax(rows["p_ext_bar_inf"]))
    summary.update(max_budget_error=float(np.max(np.abs(total - 1.0))),
                   best_tau=float(taus[best]), best_p_ext_bar_inf=float(rows["p_ext_bar_inf"][best]))
    write_summary(os.path.join(out_dir, "summary.json"), summary)
    if summary["max_budget_error"] > 1e-8:
        raise ValidationError(f"budget rows deviate from 1 by {summary['max_budget_error']:.3g}")
    return summary


COMMANDS = {
    "analytic": cmd_analytic,
    "trajectories": cmd_trajectories,
    "oracle": cmd_oracle,
    "pulse": cmd_pulse,
    "sweep-tau": cmd_sweep_tau,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lossy-cavity", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    types = ScenarioConfig.field_types()
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out-dir", required=True, help="directory for CSV and summary output")
        for key in types:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ScenarioConfig()
    try:
        if args.config:
            config.update(read_config_file(args.config))
        overrides = {k: getattr(args, k) for k in ScenarioConfig.field_types()}
        config.update(overrides)
        if args.command == "trajectories":
            for key in ("n", "seed"):
                if overrides[key] is None:
                    raise ConfigError(key, f"--{key} is required for trajectory runs")
        config.validate()
        os.makedirs(args.out_dir, exist_ok=True)
        summary = COMMANDS[args.command](config, args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ValueError) as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, default=float, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
