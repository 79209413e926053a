"""Configuration and end-to-end experiments on the two-state benchmark system.

Every run is a pure function of the configuration and the seed. Trials draw
their randomness from ``SeedSequence(seed).spawn(trials)``, and the same
latent draws are reused across the swept noise levels, so the α sweep uses
common random numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy
import sklearn
import yaml

from . import serialization, setops
from .closed_loop import PriorKnowledge, VK_from_gain, build_family, instantiate_Mcl
from .data import (
    LinearSystem,
    build_batch,
    read_csv,
    sample_disturbance_latents,
    simulate,
    t_concat_disturbance,
    write_csv,
)
from .exceptions import ConfigError, RankDeficiencyError
from .identification import build_info_set, interval_hull_prior, refine_prior
from .sets import MatrixZonotope, Polytope, Zonotope
from .synthesis import (
    SynthesisProblem,
    certificate_to_dict,
    compute_l,
    compute_y,
    sample_polytope,
    synth_cz,
    synth_polytope,
    verify_contractive,
)

MODES = ("prior", "noprior")
BUILTIN_PREFIX = "builtin:"


# ------------------------------------------------------------------ config

def _matrix(v, name):
    a = np.asarray(v, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix (list of rows)")
    return a


def _vector(v, name):
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a flat list of numbers")
    return a


def _scalar(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{name} must be a number")
    return float(v)


def _integer(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"{name} must be an integer")
    return v


def _flag(v, name):
    if not isinstance(v, bool):
        raise ValueError(f"{name} must be true or false")
    return v


def _text(v, name):
    if not isinstance(v, str):
        raise ValueError(f"{name} must be a string")
    return v


def _optional_text(v, name):
    return None if v is None else _text(v, name)


def _floats(v, name):
    if not isinstance(v, list) or not v:
        raise ValueError(f"{name} must be a nonempty list")
    return tuple(_scalar(x, name) for x in v)


def _ints(v, name):
    if not isinstance(v, list) or not v:
        raise ValueError(f"{name} must be a nonempty list")
    return tuple(_integer(x, name) for x in v)


def _texts(v, name):
    if not isinstance(v, list) or not v:
        raise ValueError(f"{name} must be a nonempty list")
    return tuple(_text(x, name) for x in v)


_REQUIRED = object()

# (yaml path, attribute, parser, default)
_SCHEMA = (
    ("system.A", "A", _matrix, _REQUIRED),
    ("system.B", "B", _matrix, _REQUIRED),
    ("system.G_h", "G_h", _matrix, _REQUIRED),
    ("system.c_h", "c_h", _vector, None),
    ("system.alpha", "alpha", _scalar, 1.0),
    ("safe_set.H", "H", _matrix, _REQUIRED),
    ("safe_set.h", "h", _vector, _REQUIRED),
    ("safe_set.form", "safe_form", _text, "polytope"),
    ("synthesis.lam", "lam", _scalar, 0.98),
    ("synthesis.T", "T", _integer, 10),
    ("synthesis.norm", "norm", _text, "l1"),
    ("synthesis.y_mode", "y_mode", _text, "support"),
    ("synthesis.minimize_norm", "minimize_norm", _flag, False),
    ("synthesis.data_csv", "data_csv", _optional_text, None),
    ("data.gain", "gain", _matrix, _REQUIRED),
    ("data.excitation", "excitation", _scalar, 4.0),
    ("data.x0_radius", "x0_radius", _scalar, 4.0),
    ("data.disturbance_mode", "disturbance_mode", _text, "uniform"),
    ("prior.source_T", "source_T", _integer, 10),
    ("prior.G_p", "G_p", _matrix, _REQUIRED),
    ("prior.c_p", "c_p", _vector, None),
    ("prior.box_center", "box_center", _matrix, _REQUIRED),
    ("prior.box_radius", "box_radius", _scalar, 0.5),
    ("prior.slack", "slack", _text, "entrywise"),
    ("prior.hull", "prior_hull", _flag, True),
    ("prior.source_csv", "source_csv", _optional_text, None),
    ("prior.file", "prior_file", _optional_text, None),
    ("sweep.grid", "grid", _text, "alpha"),
    ("sweep.alphas", "alphas", _floats, (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)),
    ("sweep.lams", "lams", _floats, (0.99,)),
    ("sweep.Ts", "Ts", _ints, (5, 10, 15)),
    ("sweep.trials", "trials", _integer, 100),
    ("sweep.modes", "modes", _texts, MODES),
    ("simulate.starts", "starts", _integer, 8),
    ("simulate.steps", "steps", _integer, 100),
    ("simulate.verify_trials", "verify_trials", _integer, 10_000),
    ("nesting.samples", "samples", _integer, 500),
    ("seed", "seed", _integer, 0),
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings. Build with :meth:`from_yaml` or :meth:`load`."""

    A: np.ndarray
    B: np.ndarray
    G_h: np.ndarray
    c_h: np.ndarray
    alpha: float
    H: np.ndarray
    h: np.ndarray
    safe_form: str
    lam: float
    T: int
    norm: str
    y_mode: str
    minimize_norm: bool
    data_csv: str | None
    gain: np.ndarray
    excitation: float
    x0_radius: float
    disturbance_mode: str
    source_T: int
    G_p: np.ndarray
    c_p: np.ndarray
    box_center: np.ndarray
    box_radius: float
    slack: str
    prior_hull: bool
    source_csv: str | None
    prior_file: str | None
    grid: str
    alphas: tuple
    lams: tuple
    Ts: tuple
    trials: int
    modes: tuple
    starts: int
    steps: int
    verify_trials: int
    samples: int
    seed: int
    source_text: str = dataclasses.field(default="", repr=False, compare=False)
    base_dir: str = dataclasses.field(default=".", repr=False, compare=False)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def config_hash(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    # construction ---------------------------------------------------------

    @classmethod
    def load(cls, path):
        """Read a config file; ``builtin:<name>`` selects a bundled config."""
        path = str(path)
        if path.startswith(BUILTIN_PREFIX):
            name = path[len(BUILTIN_PREFIX):]
            res = resources.files("zonosafe") / "configs" / f"{name}.yaml"
            if not res.is_file():
                raise ConfigError(f"no bundled config named {name!r}")
            return cls.from_yaml(res.read_text())
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_yaml(p.read_text(), base_dir=str(p.parent))

    @classmethod
    def from_yaml(cls, text, base_dir="."):
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"malformed config: {getattr(exc, 'problem', exc)}",
                              None if mark is None else mark.line + 1) from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping", 1)
        lines = _line_index(root)
        values = {}
        known = {"seed"}
        for path, attr, parse, default in _SCHEMA:
            known.update(_prefixes(path))
            raw = _lookup(doc, path)
            if raw is _MISSING:
                if default is _REQUIRED:
                    parent = path.rpartition(".")[0]
                    raise ConfigError(f"missing required key {path}", lines.get(parent))
                values[attr] = default
                continue
            try:
                values[attr] = parse(raw, path)
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), lines.get(path)) from None
        for key, line in lines.items():
            if key not in known:
                raise ConfigError(f"unknown key {key}", line)
        cfg = cls(source_text=text, base_dir=base_dir, **values)
        cfg._check(lines)
        return cfg

    def _check(self, lines):
        def fail(msg, path):
            raise ConfigError(msg, lines.get(path))

        n = self.A.shape[0]
        if self.A.shape != (n, n):
            fail(f"A must be square, got {self.A.shape}", "system.A")
        if self.B.shape[0] != n:
            fail(f"B must have {n} rows", "system.B")
        if self.G_h.shape[0] != n:
            fail(f"G_h must have {n} rows", "system.G_h")
        if self.c_h is None:
            object.__setattr__(self, "c_h", np.zeros(n))
        elif self.c_h.shape != (n,):
            fail(f"c_h must have {n} entries", "system.c_h")
        if self.alpha < 0:
            fail("alpha must be nonnegative", "system.alpha")
        if self.H.shape[1] != n or self.h.shape != (self.H.shape[0],):
            fail(f"H must have {n} columns and h one entry per row", "safe_set.H")
        if self.safe_form not in ("polytope", "zonotope"):
            fail("form must be polytope or zonotope", "safe_set.form")
        for path, v in (("synthesis.lam", self.lam),) + tuple(("sweep.lams", x) for x in self.lams):
            if not 0 < v <= 1:
                fail(f"contraction factor must lie in (0, 1], got {v}", path)
        if self.norm not in ("l1", "linf"):
            fail("norm must be l1 or linf", "synthesis.norm")
        if self.y_mode not in ("support", "literal"):
            fail("y_mode must be support or literal", "synthesis.y_mode")
        p = n + self.m
        for path, T in (("synthesis.T", self.T),) + tuple(("sweep.Ts", x) for x in self.Ts):
            if T < p:
                fail(f"horizon {T} is shorter than n + m = {p}", path)
        if self.source_T < 1:
            fail("source_T must be positive", "prior.source_T")
        if self.gain.shape != (self.m, n):
            fail(f"gain must be {self.m}x{n}", "data.gain")
        if self.excitation < 0 or self.x0_radius < 0:
            fail("excitation and x0_radius must be nonnegative", "data.excitation")
        if self.disturbance_mode not in ("uniform", "corners"):
            fail("disturbance_mode must be uniform or corners", "data.disturbance_mode")
        if self.G_p.shape[0] != n:
            fail(f"G_p must have {n} rows", "prior.G_p")
        if self.c_p is None:
            object.__setattr__(self, "c_p", np.zeros(n))
        elif self.c_p.shape != (n,):
            fail(f"c_p must have {n} entries", "prior.c_p")
        if self.box_center.shape != (n, p):
            fail(f"box_center must be {n}x{p}", "prior.box_center")
        if self.box_radius < 0:
            fail("box_radius must be nonnegative", "prior.box_radius")
        if self.slack not in ("entrywise", "shared"):
            fail("slack must be entrywise or shared", "prior.slack")
        if self.grid not in ("alpha", "lam"):
            fail("grid must be alpha or lam", "sweep.grid")
        if self.grid == "alpha" and len(self.lams) != 1:
            fail("an alpha grid needs exactly one lam", "sweep.lams")
        if self.grid == "lam" and len(self.alphas) != 1:
            fail("a lam grid needs exactly one alpha", "sweep.alphas")
        if any(a < 0 for a in self.alphas):
            fail("alphas must be nonnegative", "sweep.alphas")
        if any(md not in MODES for md in self.modes):
            fail(f"modes must be drawn from {MODES}", "sweep.modes")
        for path, v in (("sweep.trials", self.trials), ("simulate.starts", self.starts),
                        ("simulate.steps", self.steps), ("nesting.samples", self.samples)):
            if v < 1:
                fail("must be positive", path)


_MISSING = object()


def _lookup(doc, path):
    cur = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return _MISSING
        cur = cur[part]
    return cur


def _prefixes(path):
    parts = path.split(".")
    return {".".join(parts[:k]) for k in range(1, len(parts) + 1)}


def _line_index(node, prefix=""):
    """Dotted key path -> 1-based line of the key, for every mapping key."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            out.update(_line_index(value, path))
    return out


# ------------------------------------------------------------------ model pieces

def disturbance(cfg: ExperimentConfig, alpha=None) -> Zonotope:
    a = cfg.alpha if alpha is None else alpha
    return Zonotope(cfg.c_h, a * cfg.G_h)


def true_system(cfg: ExperimentConfig, alpha=None) -> LinearSystem:
    return LinearSystem(cfg.A, cfg.B, disturbance(cfg, alpha))


def source_disturbance(cfg: ExperimentConfig) -> Zonotope:
    return Zonotope(cfg.c_p, cfg.G_p)


def safe_polytope(cfg: ExperimentConfig) -> Polytope:
    return Polytope(cfg.H, cfg.h)


def loose_prior(cfg: ExperimentConfig) -> PriorKnowledge:
    return PriorKnowledge.box(cfg.box_center, cfg.box_radius)


@dataclass(frozen=True)
class TrialDraws:
    """Randomness of one trial; the target disturbance is scaled by α later."""

    x0: np.ndarray
    excitation: np.ndarray
    latents: np.ndarray
    source_x0: np.ndarray
    source_excitation: np.ndarray
    source_latents: np.ndarray


def draw_trial(cfg: ExperimentConfig, seed_seq, horizon) -> TrialDraws:
    rng = np.random.default_rng(seed_seq)
    n, m, r, e = cfg.n, cfg.m, cfg.x0_radius, cfg.excitation
    x0 = rng.uniform(-r, r, n)
    exc = rng.uniform(-e, e, (m, horizon))
    z = sample_disturbance_latents(cfg.G_h.shape[1], horizon, rng, cfg.disturbance_mode)
    sx0 = rng.uniform(-r, r, n)
    sexc = rng.uniform(-e, e, (m, cfg.source_T))
    sz = sample_disturbance_latents(cfg.G_p.shape[1], cfg.source_T, rng, cfg.disturbance_mode)
    return TrialDraws(x0, exc, z, sx0, sexc, sz)


def target_batch(cfg, draws: TrialDraws, alpha):
    sys_ = true_system(cfg, alpha)
    W = sys_.disturbance.generators @ draws.latents + sys_.disturbance.center[:, None]
    tr = simulate(sys_, draws.x0, draws.latents.shape[1], gain=cfg.gain,
                  excitation=draws.excitation, disturbances=W)
    return build_batch(tr)


def source_batch(cfg, draws: TrialDraws):
    sys_ = LinearSystem(cfg.A, cfg.B, source_disturbance(cfg))
    d = sys_.disturbance
    W = d.generators @ draws.source_latents + d.center[:, None]
    tr = simulate(sys_, draws.source_x0, cfg.source_T, gain=cfg.gain,
                  excitation=draws.source_excitation, disturbances=W)
    return build_batch(tr, tag="source-task")


def learned_prior(cfg, source, base=None) -> PriorKnowledge:
    """Refine the loose prior with source data; optionally keep only its interval hull."""
    base = loose_prior(cfg) if base is None else base
    refined = refine_prior(base, build_info_set(source, source_disturbance(cfg)), cfg.slack)
    return interval_hull_prior(refined) if cfg.prior_hull else refined


# ------------------------------------------------------------------ sweep

def run_trial(cfg: ExperimentConfig, seed_seq):
    """Results of one trial for every grid point: ``{(alpha, lam, T, mode): (feasible, l_inf, rho)}``."""
    draws = draw_trial(cfg, seed_seq, max(cfg.Ts))
    prior = learned_prior(cfg, source_batch(cfg, draws))
    safe = safe_polytope(cfg)
    _, M_x = setops.polytope_interval_hull(safe)
    out = {}
    for alpha in cfg.alphas:
        full = target_batch(cfg, draws, alpha)
        w = disturbance(cfg, alpha)
        for T in cfg.Ts:
            batch = full.head(T)
            try:
                fam = build_family(batch, t_concat_disturbance(w, T), prior, "full")
            except RankDeficiencyError:
                for lam in cfg.lams:
                    for mode in cfg.modes:
                        out[(alpha, lam, T, mode)] = (False, None, None)
                continue
            for mode in cfg.modes:
                base = SynthesisProblem(fam, safe, w, cfg.lams[0], batch)
                terms = (M_x, compute_l(fam, safe.H, M_x, mode == "prior", cfg.norm),
                         compute_y(safe.H, w.generators, cfg.y_mode))
                l_inf = float(np.max(terms[1]))
                for lam in cfg.lams:
                    cert = synth_polytope(dataclasses.replace(base, lam=lam), mode == "prior",
                                          cfg.norm, cfg.y_mode, terms=terms)
                    out[(alpha, lam, T, mode)] = (bool(cert), l_inf, cert.rho if cert else None)
    return out


def _trial_job(args):
    return run_trial(*args)


def trial_seeds(seed, trials):
    return np.random.SeedSequence(seed).spawn(trials)


def _map(fn, jobs, items):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


@dataclass(frozen=True)
class SweepRow:
    grid_value: float
    mode: str
    T: int
    feasible_count: int
    total: int
    mean_l_inf: float
    mean_rho: float | None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    trials: tuple
    runtime: float

    def row(self, grid_value, mode, T):
        for r in self.rows:
            if np.isclose(r.grid_value, grid_value) and r.mode == mode and r.T == T:
                return r
        raise KeyError((grid_value, mode, T))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid_value", "mode", "T", "feasible_count", "total", "mean_l_inf", "mean_rho"])
        for r in self.rows:
            w.writerow([_fmt(r.grid_value), r.mode, r.T, r.feasible_count, r.total,
                        _fmt(r.mean_l_inf), _fmt(r.mean_rho)])
        return buf.getvalue()


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return repr(float(v))


def run_sweep(cfg: ExperimentConfig, jobs=1) -> SweepResult:
    """Monte Carlo sweep over the α (or λ) grid, the horizons and the modes."""
    start = time.perf_counter()
    seeds = trial_seeds(cfg.seed, cfg.trials)
    trials = tuple(_map(_trial_job, jobs, [(cfg, s) for s in seeds]))
    rows = []
    grid = cfg.alphas if cfg.grid == "alpha" else cfg.lams
    for g in grid:
        alpha, lam = (g, cfg.lams[0]) if cfg.grid == "alpha" else (cfg.alphas[0], g)
        for mode in cfg.modes:
            for T in cfg.Ts:
                res = [t[(alpha, lam, T, mode)] for t in trials]
                ls = [r[1] for r in res if r[1] is not None]
                rhos = [r[2] for r in res if r[0]]
                rows.append(SweepRow(g, mode, T, sum(r[0] for r in res), len(res),
                                     float(np.mean(ls)) if ls else None,
                                     float(np.mean(rhos)) if rhos else None))
    return SweepResult(tuple(rows), trials, time.perf_counter() - start)


# ------------------------------------------------------------------ single shot

@dataclass(frozen=True)
class SingleShot:
    system: LinearSystem
    batch: object
    source: object
    prior: PriorKnowledge
    family: object


def prepare(cfg: ExperimentConfig, seed=None) -> SingleShot:
    """Data, learned prior and closed-loop family for a single experiment."""
    seed = cfg.seed if seed is None else seed
    draws = draw_trial(cfg, np.random.SeedSequence(seed), cfg.T)
    sys_ = true_system(cfg)
    batch = read_csv(cfg.resolve(cfg.data_csv)) if cfg.data_csv else target_batch(cfg, draws, cfg.alpha)
    source = (read_csv(cfg.resolve(cfg.source_csv), tag="source-task") if cfg.source_csv
              else source_batch(cfg, draws))
    base = None
    if cfg.prior_file:
        base = PriorKnowledge(serialization.load(cfg.resolve(cfg.prior_file)))
    prior = learned_prior(cfg, source, base)
    fam = build_family(batch, t_concat_disturbance(sys_.disturbance, batch.T), prior, "full")
    return SingleShot(sys_, batch, source, prior, fam)


def synthesize(cfg: ExperimentConfig, shot: SingleShot, mode="prior", lam=None):
    lam = cfg.lam if lam is None else lam
    w = shot.system.disturbance
    if cfg.safe_form == "zonotope":
        safe = setops.symmetric_polytope_to_zonotope(safe_polytope(cfg)).to_constrained()
        return synth_cz(SynthesisProblem(shot.family, safe, w, lam, shot.batch), cfg.minimize_norm)
    prob = SynthesisProblem(shot.family, safe_polytope(cfg), w, lam, shot.batch)
    return synth_polytope(prob, mode == "prior", cfg.norm, cfg.y_mode)


def boundary_points(p: Polytope, count, rng=None):
    """``count`` points on the boundary; evenly spaced along the perimeter in 2-D."""
    if p.dim != 2:
        return sample_polytope(p, rng or np.random.default_rng(0), count, boundary_fraction=1.0)
    verts = []
    q = p.H.shape[0]
    for i in range(q):
        for j in range(i + 1, q):
            M = p.H[[i, j]]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, p.h[[i, j]])
            if p.contains(v, 1e-9):
                verts.append(v)
    verts = np.unique(np.round(np.array(verts), 12), axis=0)
    c = verts.mean(axis=0)
    verts = verts[np.argsort(np.arctan2(verts[:, 1] - c[1], verts[:, 0] - c[0]))]
    edges = np.roll(verts, -1, axis=0) - verts
    lengths = np.linalg.norm(edges, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    pts = []
    for s in np.arange(count) * cum[-1] / count:
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(verts) - 1)
        pts.append(verts[k] + edges[k] * (s - cum[k]) / lengths[k])
    return np.array(pts)


def closed_loop_rollouts(cfg, sys_, K, starts, steps, rng):
    """States ``(starts, steps + 1, n)`` and inputs ``(starts, steps, m)`` under ``u = K x``."""
    X = np.empty((len(starts), steps + 1, sys_.n))
    U = np.empty((len(starts), steps, sys_.m))
    for k, x0 in enumerate(starts):
        tr = simulate(sys_, x0, steps, rng, gain=K, disturbance_mode=cfg.disturbance_mode)
        X[k], U[k] = tr.states.T, tr.inputs.T
    return X, U


# ------------------------------------------------------------------ outputs

def _versions():
    from . import __version__
    return {"zonosafe": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "pyyaml": yaml.__version__,
            "python": platform.python_version()}


def write_metadata(out: Path, cfg: ExperimentConfig, command, seed, extra=None):
    meta = {"command": command, "config_sha256": cfg.config_hash, "seed": seed,
            "versions": _versions()}
    meta.update(extra or {})
    (out / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _mode_list(mode):
    return list(MODES) if mode == "both" else [mode]


def cmd_sweep(cfg, out: Path, jobs=1, mode=None):
    if mode:
        cfg = cfg.replace(modes=tuple(_mode_list(mode)))
    res = run_sweep(cfg, jobs)
    (out / "sweep.csv").write_text(res.to_csv())
    write_metadata(out, cfg, "sweep", cfg.seed, {"runtime_s": res.runtime, "trials": cfg.trials})
    return 0, res


def cmd_synth(cfg, out: Path, mode="prior"):
    shot = prepare(cfg)
    write_csv(shot.batch, out / "data.csv")
    report, status = {}, 0
    certs = {}
    for md in _mode_list(mode):
        cert = synthesize(cfg, shot, md)
        certs[md] = cert
        _write_json(out / f"certificate_{md}.json", certificate_to_dict(cert))
        entry = {"feasible": bool(cert)}
        if cert:
            rep = verify_contractive(cert, shot.system, _verify_set(cfg), cfg.lam,
                                     cfg.verify_trials, np.random.default_rng(cfg.seed))
            entry.update(K=cert.K.tolist(), rho=cert.rho, verify_violations=rep.violations,
                         verify_trials=rep.trials, worst_case_margin=rep.worst_case_margin)
        else:
            status = 2
            entry["reason"] = cert.reason
        report[md] = entry
    _write_json(out / "report.json", report)
    write_metadata(out, cfg, "synth", cfg.seed, {"modes": _mode_list(mode)})
    return status, certs


def _verify_set(cfg):
    p = safe_polytope(cfg)
    return setops.symmetric_polytope_to_zonotope(p) if cfg.safe_form == "zonotope" else p


def cmd_simulate(cfg, out: Path, mode="prior"):
    shot = prepare(cfg)
    md = "prior" if mode == "both" else mode
    cert = synthesize(cfg, shot, md)
    write_csv(shot.batch, out / "data.csv")
    _write_json(out / f"certificate_{md}.json", certificate_to_dict(cert))
    if not cert:
        write_metadata(out, cfg, "simulate", cfg.seed, {"feasible": False})
        return 2, None
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    p = safe_polytope(cfg)
    starts = boundary_points(p, cfg.starts, rng)
    X, U = closed_loop_rollouts(cfg, shot.system, cert.K, starts, cfg.steps, rng)
    excess = float(np.max(X @ p.H.T - p.h))
    tdir = out / "trajectories"
    tdir.mkdir(exist_ok=True)
    n, m = cfg.n, cfg.m
    ucols = ["u"] if m == 1 else [f"u{j + 1}" for j in range(m)]
    for k in range(len(starts)):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ucols)
        for t in range(cfg.steps + 1):
            u = [repr(float(v)) for v in U[k, t]] if t < cfg.steps else [""] * m
            w.writerow([t] + [repr(float(v)) for v in X[k, t]] + u)
        (tdir / f"traj_{k}.csv").write_text(buf.getvalue())
    rep = verify_contractive(cert, shot.system, _verify_set(cfg), cfg.lam, cfg.verify_trials, rng)
    summary = {"K": cert.K.tolist(), "rho": cert.rho, "max_safety_excess": excess,
               "safety_violations": int(np.sum((X @ p.H.T - p.h).max(axis=2) > 1e-9)),
               "verify_violations": rep.violations, "verify_trials": rep.trials,
               "worst_case_margin": rep.worst_case_margin}
    _write_json(out / "report.json", summary)
    write_metadata(out, cfg, "simulate", cfg.seed, {"mode": md})
    return 0, summary


def nesting_sets(cfg, shot: SingleShot, V_K=None):
    """Closed-loop sets for the three refinement levels at a fixed ``V_K``."""
    if V_K is None:
        V_K = VK_from_gain(shot.batch, cfg.gain).V_K
    dc = t_concat_disturbance(shot.system.disturbance, shot.batch.T)
    return {ref: instantiate_Mcl(build_family(shot.batch, dc, shot.prior, ref), V_K)
            for ref in ("full", "noise", "none")}


def run_nesting(cfg: ExperimentConfig, rng=None):
    """Samples per set, membership violations of the nesting chain, and interval hulls."""
    shot = prepare(cfg)
    sets = nesting_sets(cfg, shot)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2]) if rng is None else rng
    samples = {k: setops.cmz_sample(v, rng, cfg.samples) for k, v in sets.items()}
    chain = (("full", "noise"), ("noise", "none"), ("full", "none"))
    violations = {f"{a}->{b}": int(sum(not setops.cmz_membership(M, sets[b], 1e-8)
                                        for M in samples[a])) for a, b in chain}
    hulls = {k: setops.cmz_interval_hull(v) for k, v in sets.items()}
    w = {k: h.width for k, h in hulls.items()}
    strict = (w["full"] < w["noise"] - 1e-12) & (w["noise"] < w["none"] - 1e-12)
    return samples, violations, hulls, strict


def cmd_nesting(cfg, out: Path):
    samples, violations, hulls, strict = run_nesting(cfg)
    n = cfg.n
    entries = [(i, j) for i in range(n) for j in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "sample"] + [f"m{i + 1}{j + 1}" for i, j in entries])
    for name, S in samples.items():
        for k, M in enumerate(S):
            w.writerow([name, k] + [repr(float(M[i, j])) for i, j in entries])
    (out / "nesting.csv").write_text(buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["set", "entry", "lo", "hi", "width"])
    for name, hull in hulls.items():
        for i, j in entries:
            w.writerow([name, f"m{i + 1}{j + 1}", repr(float(hull.lower[i, j])),
                        repr(float(hull.upper[i, j])), repr(float(hull.width[i, j]))])
    (out / "hulls.csv").write_text(buf.getvalue())
    _write_json(out / "report.json", {"violations": violations,
                                      "strictly_ordered_entries": int(strict.sum())})
    write_metadata(out, cfg, "nesting", cfg.seed)
    return 0, violations


def cmd_id(cfg, out: Path):
    draws = draw_trial(cfg, np.random.SeedSequence(cfg.seed), cfg.T)
    source = (read_csv(cfg.resolve(cfg.source_csv), tag="source-task") if cfg.source_csv
              else source_batch(cfg, draws))
    base = (PriorKnowledge(serialization.load(cfg.resolve(cfg.prior_file))) if cfg.prior_file
            else loose_prior(cfg))
    refined = refine_prior(base, build_info_set(source, source_disturbance(cfg)), cfg.slack)
    old = setops.cmz_interval_hull(base.model_set)
    new = setops.cmz_interval_hull(refined.model_set)
    write_csv(source, out / "source.csv")
    serialization.save(refined.model_set, out / "refined_prior.json")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entry", "old_lo", "old_hi", "new_lo", "new_hi"])
    rows, cols = old.lower.shape
    for i in range(rows):
        for j in range(cols):
            w.writerow([f"theta{i + 1}{j + 1}"] + [repr(float(v)) for v in
                                                   (old.lower[i, j], old.upper[i, j],
                                                    new.lower[i, j], new.upper[i, j])])
    (out / "shrinkage.csv").write_text(buf.getvalue())
    write_metadata(out, cfg, "id", cfg.seed, {"source_T": source.T})
    return 0, (old, new)


def save_prior(prior: PriorKnowledge | MatrixZonotope, path):
    """Write a prior file readable by ``prior.file``."""
    ms = prior.model_set if isinstance(prior, PriorKnowledge) else prior
    serialization.save(ms, path)
