"""Config-driven experiment runner writing deterministic CSV.

Usage: ``mixstab SUBCOMMAND --config run.toml [--out rows.csv]``. Subcommands
are ``cmi-sweep``, ``expansion``, ``thresholds``, ``recover`` and
``stabilizer-check``. Exit codes: 0 success, 2 invalid config, 3 budget
exceeded, 4 verification failure.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .exceptions import BudgetExceededError, PreconditionError, budget, check_budget
from .gibbs import GibbsModel, cmi, ising_model, total_variation
from .graph import Hypergraph, Tripartition, annulus_tripartition, boundary_set, cycle, graph_distance, grid, path
from .noise import LayeredProcess, apply_process, flip_channel, pin_single_site, replacement_channel
from .polymer import (
    ClusterExpansion,
    critical_epsilon,
    critical_pinning,
    kp_certificate,
    threshold_rhs,
)
from .recovery import MarkovLength, PatchRecovery
from .stabilizer import (
    DENSE_MAX_LOG2,
    PauliOperator,
    StabilizerHamiltonian,
    amplitude_damping,
    bit_flip,
    check_label_reduction,
    cluster_chain,
    cmi_equality_check,
    dense_label_distribution,
    dephasing,
    depolarizing,
    gibbs_state,
    induced_classical_channel,
    induced_classical_channel_dense,
    is_stabilizer_mixing,
    label_cmi,
    noisy_label_distribution,
    reconstruct_state,
    stabilizer_distribution,
    toric_patch,
    trace_norm,
)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4
CLASSICAL_MODELS = ("ising_chain", "ising_grid", "classical_from_file")
PAULI_MODELS = ("toric_patch", "cluster_chain", "pauli_from_file")
CLASSICAL_CHANNELS = ("flip", "replacement")
UNITS = "entropies and CMI in nats; TV = 1/2 l1 distance; energies in units of 1/beta"


class ConfigError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment configuration."""

    model: dict
    beta: float
    noise: dict = field(default_factory=dict)
    tripartition: dict = field(default_factory=dict)
    expansion: dict = field(default_factory=dict)
    recovery: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @property
    def digest(self):
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    @property
    def kind(self):
        return self.model["kind"]

    @property
    def is_pauli(self):
        return self.kind in PAULI_MODELS


def _require(section, key, kind, where):
    if key not in section:
        raise ConfigError(f"{where}.{key} is required")
    val = section[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"{where}.{key} must be {kind.__name__}")
    return val


def _float_list(section, key, where, default=None):
    val = section.get(key, default)
    if val is None:
        raise ConfigError(f"{where}.{key} is required")
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ConfigError(f"{where}.{key} must be a number or list of numbers")
    return [float(v) for v in val]


def _int_list(section, key, where, default=None):
    val = section.get(key, default)
    if val is None:
        raise ConfigError(f"{where}.{key} is required")
    if isinstance(val, int) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
        raise ConfigError(f"{where}.{key} must be an integer or list of integers")
    return list(val)


def parse_config(text, base_dir=Path("."), command=None):
    """Parse TOML text into an :class:`ExperimentConfig`; raises ConfigError."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}") from None
    model = raw.get("model", {})
    if command != "thresholds":
        if not isinstance(model, dict) or "kind" not in model:
            raise ConfigError("model.kind is required")
        if model["kind"] not in CLASSICAL_MODELS + PAULI_MODELS:
            raise ConfigError(f"unknown model.kind {model['kind']!r}")
    beta = raw.get("beta", 1.0)
    if not isinstance(beta, (int, float)) or isinstance(beta, bool) or beta < 0:
        raise ConfigError("beta must be a nonnegative number")
    cfg = ExperimentConfig(
        model=dict(model),
        beta=float(beta),
        noise=dict(raw.get("noise", {})),
        tripartition=dict(raw.get("tripartition", {})),
        expansion=dict(raw.get("expansion", {})),
        recovery=dict(raw.get("recovery", {})),
        thresholds=dict(raw.get("thresholds", {})),
        base_dir=Path(base_dir),
        raw=raw,
    )
    unknown = set(raw) - {"model", "beta", "noise", "tripartition", "expansion", "recovery", "thresholds"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    return cfg


# --- model construction ------------------------------------------------------


def load_classical_file(path):
    """JSON: {"n", "q", "hyperedges": [[...]], and "terms": [[flat energies]] or "coupling": J}."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from None
    try:
        n, q = int(data["n"]), int(data.get("q", 2))
        edges = [tuple(int(v) for v in e) for e in data["hyperedges"]]
        g = Hypergraph(n, edges, q=q)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model file {path}: {exc}") from None
    return g, data


def parse_pauli_text(text):
    """Parse a Pauli model file into a StabilizerHamiltonian.

    Lines ``n N`` and ``q Q`` set the size; every other non-comment line is
    ``coefficient factor factor ...`` with factors ``site:X``, ``site:Z^k``
    or ``site:Y``.
    """
    n = q = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head in ("n", "q"):
            try:
                val = int(rest.strip())
            except ValueError:
                raise ConfigError(f"line {lineno}: {head} needs an integer") from None
            if head == "n":
                n = val
            else:
                q = val
            continue
        try:
            coef = float(head)
        except ValueError:
            raise ConfigError(f"line {lineno}: expected a coefficient, got {head!r}") from None
        rows.append((lineno, coef, rest))
    if n is None:
        raise ConfigError("Pauli file must declare n")
    q = 2 if q is None else q
    terms = []
    for lineno, coef, rest in rows:
        try:
            terms.append((coef, PauliOperator.from_string(rest, n, q)))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    try:
        return StabilizerHamiltonian(n, terms, q)
    except (ValueError, PreconditionError) as exc:
        raise ConfigError(f"Pauli model: {exc}") from None


def build_classical(cfg):
    m = cfg.model
    kind = m["kind"]
    coupling = float(m.get("coupling", 1.0))
    fld = float(m.get("field", 0.0))
    if kind == "ising_chain":
        n = _require(m, "n", int, "model")
        g = cycle(n) if m.get("periodic", False) else path(n)
        return ising_model(g, cfg.beta, coupling, fld)
    if kind == "ising_grid":
        g = grid(_require(m, "L", int, "model"), _require(m, "M", int, "model"), bool(m.get("periodic", False)))
        return ising_model(g, cfg.beta, coupling, fld)
    if kind == "classical_from_file":
        g, data = load_classical_file(cfg.base_dir / _require(m, "path", str, "model"))
        if "terms" in data:
            try:
                return GibbsModel(g, [np.asarray(t, dtype=float) for t in data["terms"]], cfg.beta)
            except ValueError as exc:
                raise ConfigError(f"model file terms: {exc}") from None
        return ising_model(g, cfg.beta, float(data.get("coupling", coupling)), fld)
    raise ConfigError(f"model.kind {kind!r} is not classical")


def build_pauli(cfg):
    m = cfg.model
    kind = m["kind"]
    coupling = float(m.get("coupling", 1.0))
    if kind == "toric_patch":
        return toric_patch(_require(m, "L", int, "model"), coupling)
    if kind == "cluster_chain":
        return cluster_chain(_require(m, "n", int, "model"), coupling)
    if kind == "pauli_from_file":
        p = cfg.base_dir / _require(m, "path", str, "model")
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read Pauli file {p}: {exc}") from None
        return parse_pauli_text(text)
    raise ConfigError(f"model.kind {kind!r} is not a Pauli model")


def _model_size_bits(cfg):
    m = cfg.model
    kind = m["kind"]
    if kind == "ising_chain":
        return _require(m, "n", int, "model")
    if kind == "ising_grid":
        return _require(m, "L", int, "model") * _require(m, "M", int, "model")
    if kind == "toric_patch":
        return 2 * _require(m, "L", int, "model") ** 2
    if kind == "cluster_chain":
        return _require(m, "n", int, "model")
    return None


def classical_process(cfg, g, eps):
    noise = cfg.noise
    channel = noise.get("channel", "flip")
    if channel not in CLASSICAL_CHANNELS:
        raise ConfigError(f"noise.channel {channel!r} is not a classical channel")
    depth = int(noise.get("depth", 1))
    if depth < 1:
        raise ConfigError("noise.depth must be >= 1")
    layout = noise.get("layout", "single")
    q = g.q
    if layout == "single":
        make = (lambda v: flip_channel(v, eps, q)) if channel == "flip" else (lambda v: replacement_channel((v,), eps, q))
        return LayeredProcess([[make(v) for v in range(g.n_vertices)] for _ in range(depth)])
    if not isinstance(layout, list):
        raise ConfigError("noise.layout must be \"single\" or a list of layers of supports")
    layers = []
    try:
        for layer in layout:
            layers.append([replacement_channel(tuple(s), eps, q) if len(s) > 1 or channel == "replacement" else flip_channel(s[0], eps, q) for s in layer])
        return LayeredProcess(layers).check_graph(g)
    except (TypeError, IndexError, ValueError, PreconditionError) as exc:
        raise ConfigError(f"noise.layout: {exc}") from None


def quantum_channels(cfg, h, eps):
    channel = cfg.noise.get("channel", "depolarizing")
    make = {
        "depolarizing": lambda v: depolarizing(v, eps, h.q),
        "dephasing": lambda v: dephasing(v, eps, h.q),
        "bit_flip": lambda v: bit_flip(v, eps, h.q),
        "amplitude_damping": lambda v: amplitude_damping(v, eps),
    }
    if channel not in make:
        raise ConfigError(f"noise.channel {channel!r} is not a quantum channel")
    if channel == "amplitude_damping" and h.q != 2:
        raise ConfigError("amplitude damping is defined for qubits only")
    depth = int(cfg.noise.get("depth", 1))
    return [make[channel](v) for _ in range(depth) for v in range(h.n)]


def _epsilons(cfg):
    eps = _float_list(cfg.noise, "epsilon", "noise", default=[0.0])
    if any(not 0 <= e <= 1 for e in eps):
        raise ConfigError("noise.epsilon values must lie in [0, 1]")
    return eps


def _tripartitions(cfg, g):
    center = _int_list(cfg.tripartition, "center", "tripartition")
    radii = _int_list(cfg.tripartition, "radii", "tripartition", default=[1])
    out = []
    try:
        for r in radii:
            t = annulus_tripartition(g, center, r)
            if t.C:
                out.append((r, t))
    except ValueError as exc:
        raise ConfigError(f"tripartition: {exc}") from None
    return out


# --- experiments -------------------------------------------------------------


def run_cmi_sweep(cfg):
    eps_list = _epsilons(cfg)
    header = ["epsilon", "radius", "d_AC", "cmi", "xi"]
    rows = []
    if cfg.is_pauli:
        h = build_pauli(cfg)
        g = h.graph
        check_budget(h.n_labels * math.log2(h.q), "label distribution")
        dists = [(e, noisy_label_distribution(h, cfg.beta, quantum_channels(cfg, h, e))) for e in eps_list]
        measure = lambda p, t: label_cmi(h, p, t)  # noqa: E731
    else:
        m = build_classical(cfg)
        g = m.graph
        p0 = m.exact_distribution()
        dists = [(e, apply_process(p0, classical_process(cfg, g, e))) for e in eps_list]
        measure = cmi
    trips = _tripartitions(cfg, g)
    for eps, p in dists:
        samples = [(r, graph_distance(g, t.A, t.C), measure(p, t)) for r, t in trips]
        try:
            xi = MarkovLength().fit([d for _, d, _ in samples], [c for _, _, c in samples]).xi_
        except PreconditionError:
            xi = 0.0
        rows += [[eps, r, d, c, xi] for r, d, c in samples]
    return header, rows, True


def _pinned_instance(cfg):
    m = build_classical(cfg)
    ex = cfg.expansion
    b = _int_list(ex, "b", "expansion")
    obs = _int_list(ex, "observed", "expansion", default=[0] * len(b))
    if len(obs) != len(b):
        raise ConfigError("expansion.observed needs one value per B site")
    eps = float(_float_list(ex, "epsilon", "expansion", default=cfg.noise.get("epsilon", [0.0]))[0])
    g = m.graph
    try:
        g.region(b)
        chans = [flip_channel(v, eps, g.dims[v]) for v in b]
        pm = pin_single_site(m, chans, dict(zip(b, obs)))
    except (ValueError, PreconditionError) as exc:
        raise ConfigError(f"expansion: {exc}") from None
    bset = set(b)
    rest = [v for v in range(g.n_vertices) if v not in bset]
    a = set(_int_list(ex, "a", "expansion", default=[v for v in rest if v < min(b)]))
    c = set(rest) - a
    try:
        t = Tripartition(frozenset(a), frozenset(bset), frozenset(c))
        t.check(g)
    except (ValueError, PreconditionError) as exc:
        raise ConfigError(f"expansion tripartition: {exc}") from None
    return pm, t


def run_expansion_report(cfg):
    pm, t = _pinned_instance(cfg)
    w_max = int(cfg.expansion.get("w_max", len(pm.b_sites)))
    if w_max < 1:
        raise ConfigError("expansion.w_max must be >= 1")
    x_vals = _int_list(cfg.expansion, "x_ac", "expansion", default=[0] * len(pm.ac_sites))
    if len(x_vals) != len(pm.ac_sites):
        raise ConfigError("expansion.x_ac needs one value per A/C site")
    x_ac = dict(zip(pm.ac_sites, x_vals))
    check_budget(pm.n, "pinned enumeration")
    pc = critical_pinning(max(pm.degree, 1), pm.h_max, pm.q_eff)
    b = pm.p_min - pc
    g = pm.graph
    boundary = min(len(boundary_set(g, t.A)), len(boundary_set(g, t.C)))
    d_ac = graph_distance(g, t.A, t.C)
    bound = boundary * math.exp(-b * d_ac) if b > 0 else math.nan
    kp = kp_certificate(pm, 1.0, b, len(pm.b_sites)).margin if b >= 0 else math.nan
    rep = ClusterExpansion(pm, t, w_max).evaluate(x_ac)
    header = ["w_max", "truncated_log_p", "exact_log_p", "residual", "abs_f_ac", "f_ac_bound", "kp_margin"]
    rows = [
        [w + 1, rep.partial_log_p[w], rep.exact_log_p, rep.residuals[w], abs(rep.partial_f["AC"][w]), bound, kp]
        for w in range(w_max)
    ]
    ok = all(math.isnan(bound) or abs(r[4]) <= bound for r in rows)
    return header, rows, ok


def run_thresholds(cfg):
    th = cfg.thresholds
    degs = _float_list(th, "degree", "thresholds", default=[1.0])
    betas = _float_list(th, "beta", "thresholds", default=[cfg.beta])
    qs = _int_list(th, "q", "thresholds", default=[2])
    ds = _int_list(th, "depth", "thresholds", default=[1])
    if any(k <= 0 for k in degs) or any(b < 0 for b in betas) or any(q < 2 for q in qs) or any(d < 1 for d in ds):
        raise ConfigError("thresholds need degree > 0, beta >= 0, q >= 2, depth >= 1")
    header = ["degree", "beta", "q", "depth", "p_min_c", "eps_c"]
    rows = []
    for k in degs:
        for beta in betas:
            for q in qs:
                for d in ds:
                    pc = threshold_rhs(k, beta, q, d)
                    rows.append([k, beta, q, d, pc, critical_epsilon(k, beta, q, d)])
    return header, rows, True


def run_recovery(cfg):
    m = build_classical(cfg)
    g = m.graph
    radii = _int_list(cfg.recovery, "radii", "recovery", default=[1, 2, 3])
    if any(r < 0 for r in radii):
        raise ConfigError("recovery.radii must be nonnegative")
    p0 = m.exact_distribution()
    header = ["epsilon", "r", "recovery_error", "tv_no_recovery"]
    rows = []
    ok = True
    for eps in _epsilons(cfg):
        proc = classical_process(cfg, g, eps)
        for r in radii:
            rec = PatchRecovery(g, r).fit(p0, proc)
            err = total_variation(rec.transform(rec.noisy_), p0)
            tv0 = total_variation(rec.noisy_, p0)
            ok = ok and err <= tv0 + 1e-12
            rows.append([eps, r, err, tv0])
    return header, rows, ok


def run_stabilizer_check(cfg):
    if not cfg.is_pauli:
        raise ConfigError("stabilizer-check needs a Pauli model")
    h = build_pauli(cfg)
    if h.n * math.log2(h.q) > DENSE_MAX_LOG2:
        raise BudgetExceededError(f"dense checks need at most 2^{DENSE_MAX_LOG2:g} dimensions")
    eps = _epsilons(cfg)[0] if "epsilon" in cfg.noise else 0.1
    header = ["check", "value", "tolerance", "pass"]
    rows = []
    rho = gibbs_state(h, cfg.beta)
    p = stabilizer_distribution(h, cfg.beta).distribution()
    rows.append(["reconstruction_trace_norm", trace_norm(reconstruct_state(h, p) - rho), 1e-10])
    pd = dense_label_distribution(h, rho)
    rows.append(["label_distribution_max_abs", float(np.abs(pd.table - p.table).max()), 1e-10])
    chans = quantum_channels(cfg, h, eps)
    mixing = all(is_stabilizer_mixing(ch, h) for ch in chans[: h.n])
    rows.append(["stabilizer_mixing", 0.0 if mixing else math.inf, 0.0])
    if mixing:
        worst = 0.0
        for ch in chans[: h.n]:
            a = induced_classical_channel(ch, h)
            b = induced_classical_channel_dense(ch, h)
            worst = max(worst, float(np.abs(a.matrix - b.matrix).max()))
        rows.append(["induced_channel_max_abs", worst, 1e-10])
        for r, t in _tripartitions(cfg, h.graph) if cfg.tripartition else []:
            try:
                check_label_reduction(h, t)
            except PreconditionError:
                rows.append([f"cmi_equality_radius_{r}_hidden_products", math.nan, 1e-8])
                continue
            iq, ic = cmi_equality_check(h, cfg.beta, chans, t)
            rows.append([f"cmi_equality_radius_{r}", abs(iq - ic), 1e-8])
    rows = [row + [row[1] <= row[2]] for row in rows]
    for row in rows:
        print(f"{'PASS' if row[3] else 'FAIL'} {row[0]} = {_fmt(row[1])} (tol {_fmt(row[2])})", file=sys.stderr)
    return header, rows, all(row[3] for row in rows)


COMMANDS = {
    "cmi-sweep": run_cmi_sweep,
    "expansion": run_expansion_report,
    "thresholds": run_thresholds,
    "recover": run_recovery,
    "stabilizer-check": run_stabilizer_check,
}


def validate_budget(cfg, command):
    """Reject configs whose enumeration exceeds the budget before running anything."""
    if command == "thresholds":
        return
    bits = _model_size_bits(cfg)
    if bits is not None:
        if cfg.kind == "toric_patch" or cfg.kind == "cluster_chain":
            return
        check_budget(bits, f"{cfg.kind} enumeration")


def render_csv(cfg, command, header, rows):
    buf = io.StringIO()
    buf.write(f"# tool: mixstab {__version__}\n")
    buf.write(f"# command: {command}\n")
    buf.write(f"# config_sha256: {cfg.digest}\n")
    buf.write(f"# units: {UNITS}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def build_parser():
    ap = argparse.ArgumentParser(prog="mixstab", description="Exact stability experiments for noisy Gibbs states.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=False, help="TOML experiment config")
    ap.add_argument("--out", help="CSV output path (default stdout)")
    ap.add_argument("--threads", type=int, default=1, help="accepted for compatibility; runs are single-threaded")
    ap.add_argument("--budget-bits", type=float, default=26.0, help="max log2 of any enumerated state space")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.budget_bits <= 0:
            raise ConfigError("--budget-bits must be positive")
        if args.config is None:
            if args.command != "thresholds":
                raise ConfigError("--config is required")
            text, base = "", Path(".")
        else:
            cp = Path(args.config)
            try:
                text = cp.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            base = cp.parent
        cfg = parse_config(text, base, args.command)
        with budget(args.budget_bits):
            validate_budget(cfg, args.command)
            header, rows, ok = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"error: budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PreconditionError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = render_csv(cfg, args.command, header, rows)
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK if ok else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
