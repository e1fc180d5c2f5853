"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 boundary condition failure,
3 parity violation, 4 retry cap exhausted.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from miranda import report
from miranda.errors import (
    BoundaryConditionError,
    DimensionError,
    EvaluationError,
    MirandaError,
    NonSmoothMapError,
    NotOutwardError,
    ParityViolation,
    RetryCapExceeded,
    SmoothingError,
    TraceError,
)
from miranda.funcmodel import builtin, parse_map
from miranda.geometry import Cuboid, check_miranda
from miranda.solver import (
    DEFAULT_DEGREES,
    DEFAULT_EPSILON,
    SolveOptions,
    solve,
    solve_continuous,
    solve_field,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BOUNDARY = 2
EXIT_PARITY = 3
EXIT_RETRY = 4


@dataclass
class RunConfig:
    command: str
    map: str | None = None
    expr: str | None = None
    file: str | None = None
    file_text: str | None = None
    dim: int | None = None
    box: list | None = None  # [[a1, b1], ...]
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    samples: int = 33
    sigma_min: float = 1e-8
    retry_cap: int = 16
    grid_supplement: bool | None = None
    axis_order: list | None = None
    degrees: list | None = None
    eta: float | None = None
    grid: int = 32
    output: str | None = None
    out_dir: str | None = None
    timings: bool = False

    def to_dict(self) -> dict:
        return report.jsonable(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise click.UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)


class UsageProblem(Exception):
    pass


# --------------------------------------------------------------------------
# input handling


def _parse_box(text: str | None, dim: int | None):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageProblem(f"--box expects comma-separated numbers, got {text!r}") from None
    if len(vals) == 2:
        return [vals] * (dim or 1) if dim else [vals]
    if len(vals) % 2 or not vals:
        raise UsageProblem("--box takes 'a,b' or one 'a_i,b_i' pair per axis")
    return [vals[i:i + 2] for i in range(0, len(vals), 2)]


def load_map(cfg: RunConfig):
    sources = [s for s in (cfg.map, cfg.expr, cfg.file) if s is not None]
    if len(sources) != 1:
        raise UsageProblem("give exactly one of --map, --expr, --file")
    if cfg.map is not None:
        return builtin(cfg.map, cfg.dim)
    if cfg.expr is not None:
        return parse_map(cfg.expr, cfg.dim)
    text = cfg.file_text
    if text is None:
        raise UsageProblem("map file contents missing from config")
    return parse_map(text, cfg.dim)


def build_cuboid(cfg: RunConfig, n: int) -> Cuboid:
    if cfg.box is None:
        return Cuboid.symmetric(n)
    pairs = cfg.box
    if len(pairs) == 1 and n > 1:
        pairs = pairs * n
    if len(pairs) != n:
        raise UsageProblem(f"--box gives {len(pairs)} intervals for a map of dimension {n}")
    return Cuboid([p[0] for p in pairs], [p[1] for p in pairs])


def _options(cfg: RunConfig) -> SolveOptions:
    order = None
    if cfg.axis_order is not None:
        order = tuple(int(i) - 1 for i in cfg.axis_order)
    return SolveOptions(samples_per_axis=cfg.samples, retry_cap=cfg.retry_cap,
                        sigma_min=cfg.sigma_min, grid_supplement=cfg.grid_supplement,
                        axis_order=order)


def _emit(cfg: RunConfig, doc: dict, destination: str | None = None) -> None:
    text = report.dumps(doc)
    target = destination if destination is not None else cfg.output
    if target and target != "-":
        Path(target).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# command implementations: RunConfig -> (report document, exit code)


def run_check(cfg):
    f = load_map(cfg)
    box = build_cuboid(cfg, f.n_in)
    rep = check_miranda(f, box, cfg.samples)
    doc = report.build("check", cfg.to_dict(), {"boundary": report.boundary_section(rep)})
    return doc, EXIT_OK if rep.passed else EXIT_BOUNDARY


def _solve_doc(cfg, command, cert, elapsed, extra=None):
    body = report.certificate_section(cert)
    body["boundary"] = report.boundary_section(cert.boundary)
    if extra:
        body.update(extra)
    return report.build(command, cfg.to_dict(), body, cert.stats, elapsed if cfg.timings else None)


def run_solve(cfg):
    f = load_map(cfg)
    box = build_cuboid(cfg, f.n_in)
    t0 = time.perf_counter()
    cert = solve(f, box, cfg.epsilon, cfg.seed, _options(cfg))
    return _solve_doc(cfg, "solve", cert, time.perf_counter() - t0), EXIT_OK


def _fmt(v: float) -> str:
    return repr(float(v))


def _svg(box: Cuboid, components, starts) -> str:
    (a1, a2), (b1, b2) = box.lower, box.upper
    w, h = b1 - a1, b2 - a2
    stroke = max(w, h) / 300
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="600" height="{_fmt(600 * h / w)}" '
        f'viewBox="{_fmt(a1)} {_fmt(a2)} {_fmt(w)} {_fmt(h)}">',
        # flip y so x2 grows upwards; maps [a2, b2] onto itself
        f'<g transform="matrix(1 0 0 -1 0 {_fmt(a2 + b2)})">',
        f'<rect class="cuboid" x="{_fmt(a1)}" y="{_fmt(a2)}" width="{_fmt(w)}" height="{_fmt(h)}" '
        f'fill="none" stroke="black" stroke-width="{_fmt(stroke)}"/>',
    ]
    colors = {"connecting": "#1f77b4", "same_face": "#2ca02c", "loop": "#d62728"}
    for i, c in enumerate(components):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in c.polyline)
        if c.closed:
            lines.append(f'<polygon class="component {c.classification}" data-index="{i}" points="{pts}" '
                         f'fill="none" stroke="{colors[c.classification]}" stroke-width="{_fmt(stroke)}"/>')
        else:
            lines.append(f'<polyline class="component {c.classification}" data-index="{i}" points="{pts}" '
                         f'fill="none" stroke="{colors[c.classification]}" stroke-width="{_fmt(stroke)}"/>')
    for side, p in starts:
        lines.append(f'<circle class="start {side.value}" cx="{_fmt(p[0])}" cy="{_fmt(p[1])}" '
                     f'r="{_fmt(3 * stroke)}" fill="black"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


def run_trace(cfg):
    f = load_map(cfg)
    if f.n_in != 2:
        raise UsageProblem("trace exports curves for dimension 2 only")
    if cfg.axis_order is not None:
        raise UsageProblem("trace draws the level set of f1 and does not take --axis-order")
    box = build_cuboid(cfg, 2)
    t0 = time.perf_counter()
    cert = solve(f, box, cfg.epsilon, cfg.seed, _options(cfg))
    elapsed = time.perf_counter() - t0
    level = cert.level
    comps = [led.component for led in level.ledgers]
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, c in enumerate(comps):
        p = out / f"component_{i:03d}_{c.classification}.csv"
        rows = ["x1,x2"] + [f"{_fmt(x)},{_fmt(y)}" for x, y in c.polyline]
        p.write_text("\n".join(rows) + "\n")
        files.append(p.name)
    svg = out / "level_set.svg"
    svg.write_text(_svg(box, comps, level.starts.all()))
    files.append(svg.name)
    starts = {"lower": level.starts.lower, "upper": level.starts.upper}
    return _solve_doc(cfg, "trace", cert, elapsed, {"files": files, "boundary_starts": starts}), EXIT_OK


def run_compare(cfg):
    from scipy.optimize import linear_sum_assignment

    from miranda.oracle import count_zeros_grid

    f = load_map(cfg)
    if f.n_in > 3:
        raise UsageProblem("compare supports n <= 3")
    box = build_cuboid(cfg, f.n_in)
    cert = solve(f, box, cfg.epsilon, cfg.seed, _options(cfg))
    orc = count_zeros_grid(f, box, cert.q, cfg.grid)
    Z = cert.zero_points
    counts_match = orc.count == cert.count
    max_dist = None
    if len(Z) and orc.count:
        D = np.linalg.norm(Z[:, None, :] - orc.zeros[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(D)
        max_dist = float(D[rows, cols].max())
    orc_parity = "odd" if orc.count % 2 else "even"
    body = {
        "solver": {"zero_count": cert.count, "parity": cert.parity, "q": cert.q},
        "oracle": {"zero_count": orc.count, "parity": orc_parity, "grid_per_axis": orc.grid_per_axis,
                   "basins": orc.basins, "dedup_radius": orc.dedup_radius},
        "counts_match": counts_match,
        "parity_agrees": orc_parity == cert.parity,
        "max_pairing_distance": max_dist,
        "match": counts_match,
    }
    return report.build("compare", cfg.to_dict(), body, cert.stats), EXIT_OK if counts_match else EXIT_PARITY


def run_field(cfg):
    f = load_map(cfg)
    box = build_cuboid(cfg, f.n_in)
    t0 = time.perf_counter()
    try:
        fr = solve_field(f, box, cfg.epsilon, cfg.seed, _options(cfg))
    except NotOutwardError as err:
        verdicts = [{"axis": v.axis + 1, "side": v.side.value, "outward": v.outward, "witness": v.witness}
                    for v in err.report.faces]
        body = {"outward": False, "faces": verdicts, "error": str(err)}
        return report.build("field", cfg.to_dict(), body), EXIT_BOUNDARY
    verdicts = [{"axis": v.axis + 1, "side": v.side.value, "outward": v.outward, "witness": v.witness}
                for v in fr.faces]
    doc = _solve_doc(cfg, "field", fr.certificate, time.perf_counter() - t0,
                     {"outward": fr.outward, "faces": verdicts})
    return doc, EXIT_OK


def run_continuous(cfg):
    f = load_map(cfg)
    box = build_cuboid(cfg, f.n_in)
    degrees = tuple(cfg.degrees) if cfg.degrees else DEFAULT_DEGREES
    eta = float("inf") if cfg.eta is None else cfg.eta
    t0 = time.perf_counter()
    res = solve_continuous(f, box, degrees, cfg.epsilon, cfg.seed, _options(cfg), eta)
    extra = {
        "continuous": {
            "eta_estimate": res.eta_estimate,
            "degree": res.degree,
            "x_star": res.x_star,
            "residual": res.residual,
            "approximation_gap": res.approximation_gap,
            "level_gap": res.level_gap,
            "c_norm": res.c_norm,
            "bound": res.bound,
            "decomposition_consistent": res.decomposition_consistent,
            "sup_error": res.sup_error,
            "refined_zeros": res.zeros,
        }
    }
    return _solve_doc(cfg, "continuous", res.certificate, time.perf_counter() - t0, extra), EXIT_OK


RUNNERS = {
    "check": run_check,
    "solve": run_solve,
    "trace": run_trace,
    "compare": run_compare,
    "field": run_field,
    "continuous": run_continuous,
}


def execute(cfg: RunConfig, destination: str | None = None) -> int:
    """Run a configuration, write its report, and return the exit code.

    ``destination`` overrides where the report goes ("-" for stdout) without
    touching the embedded config.
    """
    try:
        doc, code = RUNNERS[cfg.command](cfg)
    except (UsageProblem, DimensionError, NonSmoothMapError, EvaluationError, ValueError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_USAGE
    except (BoundaryConditionError, SmoothingError) as err:
        click.echo(f"error: {err}", err=True)
        rep = getattr(err, "report", None)
        if isinstance(err, BoundaryConditionError) and rep is not None:
            _emit(cfg, report.build(cfg.command, cfg.to_dict(), {"boundary": report.boundary_section(rep)}),
                  destination)
        return EXIT_BOUNDARY
    except ParityViolation as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_PARITY
    except (RetryCapExceeded, TraceError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_RETRY
    except MirandaError as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_USAGE
    _emit(cfg, doc, destination)
    return code


# --------------------------------------------------------------------------
# click wiring


def _map_options(fn):
    opts = [
        click.option("--map", "map_name", help="Builtin corpus map name."),
        click.option("--expr", help="Map expression, components separated by ';'."),
        click.option("--file", "file_path", type=click.Path(exists=True, dir_okay=False),
                     help="Text file holding a map expression."),
        click.option("--dim", type=click.IntRange(min=1), help="Dimension n."),
        click.option("--box", help="Cuboid bounds: 'a,b' for every axis or 'a1,b1,a2,b2,...'."),
        click.option("--samples", type=click.IntRange(min=1), default=33, show_default=True,
                     help="Face samples per axis for the boundary check."),
        click.option("--output", "-o", type=click.Path(dir_okay=False), help="Report path (default stdout)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _solver_options(fn):
    opts = [
        click.option("--epsilon", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_EPSILON,
                     show_default=True, help="Bound on ||q||."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--sigma-min", type=click.FloatRange(min=0), default=1e-8, show_default=True,
                     help="Relative singular value threshold of the regularity audit."),
        click.option("--retry-cap", type=click.IntRange(min=1), default=16, show_default=True),
        click.option("--grid-supplement/--no-grid-supplement", default=None,
                     help="Search for interior loops from a grid (default: on for n <= 3)."),
        click.option("--axis-order", help="Coordinate permutation, e.g. '2,1'."),
        click.option("--timings", is_flag=True, help="Include wall-clock time (breaks byte-identity)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _int_list(text, name):
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageProblem(f"{name} expects comma-separated integers") from None


def _config(command, map_name=None, expr=None, file_path=None, dim=None, box=None, samples=33,
            output=None, epsilon=DEFAULT_EPSILON, seed=0, sigma_min=1e-8, retry_cap=16,
            grid_supplement=None, axis_order=None, timings=False, **extra) -> RunConfig:
    file_text = Path(file_path).read_text() if file_path else None
    order = _int_list(axis_order, "--axis-order")
    return RunConfig(command=command, map=map_name, expr=expr, file=file_path, file_text=file_text,
                     dim=dim, box=_parse_box(box, None), epsilon=epsilon, seed=seed, samples=samples,
                     sigma_min=sigma_min, retry_cap=retry_cap, grid_supplement=grid_supplement,
                     axis_order=order, output=output, timings=timings, **extra)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact", prog_name="miranda")
def cli():
    """Parity-certified zero finding for maps on a box."""


@cli.command()
@_map_options
def check(**kw):
    """Check the opposite-face sign condition."""
    return execute(_config("check", **kw))


@cli.command("solve")
@_map_options
@_solver_options
def solve_cmd(**kw):
    """Locate zeros and emit a parity certificate."""
    return execute(_config("solve", **kw))


@cli.command("trace")
@_map_options
@_solver_options
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True,
              help="Directory for the CSV and SVG files.")
def trace_cmd(out_dir, **kw):
    """Export the traced level-set components of a 2-D map (CSV + SVG)."""
    return execute(_config("trace", out_dir=out_dir, **kw))


@cli.command()
@_map_options
@_solver_options
@click.option("--grid", type=int, default=32, show_default=True, help="Oracle grid nodes per axis.")
def compare(grid, **kw):
    """Compare solver zeros with the brute-force oracle."""
    return execute(_config("compare", grid=grid, **kw))


@cli.command()
@_map_options
@_solver_options
def field(**kw):
    """Zeros of a vector field that points outwards on the box."""
    return execute(_config("field", **kw))


@cli.command()
@_map_options
@_solver_options
@click.option("--degrees", default=",".join(str(d) for d in DEFAULT_DEGREES), show_default=True,
              help="Bernstein degree schedule.")
@click.option("--eta", type=float, help="Sup-error budget; approximants must stay within eta/2.")
def continuous(degrees, eta, **kw):
    """Approximate zero of a continuous (possibly non-smooth) map."""
    return execute(_config("continuous", degrees=_int_list(degrees, "--degrees"), eta=eta, **kw))


@cli.command()
@click.argument("report_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", default="-", show_default=True, type=click.Path(dir_okay=False),
              help="Where to write the reproduced report ('-' for stdout).")
def rerun(report_path, output):
    """Re-execute the configuration embedded in a report."""
    doc = json.loads(Path(report_path).read_text())
    cfg = RunConfig.from_dict(doc["config"])
    if cfg.command not in RUNNERS:
        raise UsageProblem(f"unknown command {cfg.command!r} in report")
    return execute(cfg, output)


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="miranda", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except UsageProblem as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
