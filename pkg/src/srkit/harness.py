"""Desk-scale numerical experiments over the rounding kernels.

Each experiment is specified by an :class:`ExperimentSpec` and produces an
:class:`ExperimentResult`: one row per (mode, problem size, trial) with the
final value, an error-free reference computed in exact arithmetic, and the
absolute/relative errors, plus per-group summary statistics and fitted
log-log slopes where a size grid is swept.

Reproducibility contract: every random quantity comes from a stream derived
as ``derive_stream(seed, stream_id)`` where the id packs (purpose,
mode index, size index, trial index).  Input data streams are shared across
modes so mode comparisons are paired; rounding streams are per mode.  Rows
are sorted before emission, so results are byte-identical regardless of the
thread count.
"""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from .entropy import derive_stream
from .formats import (
    FloatFormat,
    WorkingReal,
    ZERO,
    format_hex,
    get_format,
    parse_working_real,
)
from .kernels import (
    DETERMINISTIC_MODES,
    RNE,
    RZ,
    SrConfig,
    p3109_round,
    round_deterministic,
    sr_exact,
    sr_limited,
)

Rounding = Union[str, SrConfig]

EXPERIMENT_KINDS = ("stagnation", "sum_growth", "r_sweep", "dot", "horner",
                    "pairwise", "gd", "pi_demo")

# stream-id layout: purpose | mode | size-index | trial
_PURPOSE_ROUND = 0
_PURPOSE_DATA = 1


def _stream_id(purpose: int, mode_idx: int, n_idx: int, trial: int) -> int:
    return (purpose << 62) | (mode_idx << 48) | (n_idx << 32) | trial


@dataclass
class ExperimentSpec:
    """Parameters of one experiment run.

    ``cfg`` is the stochastic rounding under study (exact SR by default);
    most experiments compare it against nearest-even.  ``modes`` overrides
    the default mode list with explicit (label, rounding) pairs.
    Kind-specific fields: ``acc0``/``delta`` (stagnation), ``n_grid``
    (sum_growth, dot), ``r_grid`` (r_sweep), ``step``/``dimension``/
    ``iterations`` (gd), ``degree``/``eval_point`` (horner).  Numeric fields
    accept literals parseable by :func:`srkit.formats.parse_working_real`.
    """

    kind: str
    fmt: str = "binary16"
    n: int = 4096
    trials: int = 30
    seed: int = 0
    cfg: SrConfig = field(default_factory=lambda: SrConfig("exact"))
    modes: Optional[Sequence[tuple[str, Rounding]]] = None
    acc0: str = "1.0"
    delta: str = "0x1p-13"
    n_grid: Optional[Sequence[int]] = None
    r_grid: Optional[Sequence[int]] = None
    step: str = "0x1p-4"
    dimension: int = 16
    iterations: int = 2000
    degree: int = 64
    eval_point: str = "0.99"
    threads: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1 or self.n < 1:
            raise ValueError("trials and n must be at least 1")

    def format(self) -> FloatFormat:
        return self.fmt if isinstance(self.fmt, FloatFormat) else get_format(self.fmt)


@dataclass
class Row:
    mode: str
    n: int
    r: Optional[int]
    trial: int
    final: Union[WorkingReal, float]
    exact: Union[WorkingReal, float]
    abs_err: Fraction
    rel_err: Optional[Fraction]
    diverged: bool = False


@dataclass
class ExperimentResult:
    kind: str
    seed: int
    rows: list[Row]
    summary: dict

    CSV_HEADER = "mode,n,r,trial,final,exact,abs_err,rel_err"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for row in self.rows:
            lines.append(",".join([
                row.mode,
                str(row.n),
                "" if row.r is None else str(row.r),
                str(row.trial),
                _num_str(row.final),
                _num_str(row.exact),
                repr(float(row.abs_err)),
                "" if row.rel_err is None else repr(float(row.rel_err)),
            ]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2)


def _num_str(v) -> str:
    if isinstance(v, WorkingReal):
        return format_hex(v)
    return float(v).hex()


def _mode_label(rounding: Rounding) -> str:
    if isinstance(rounding, SrConfig):
        if rounding.variant == "exact":
            return "sr-exact"
        tag = rounding.variant if rounding.variant != "limited" else "limited"
        label = f"sr-{tag}-r{rounding.r}"
        if rounding.variant == "limited" and rounding.effective_intermediate != RZ:
            label += f"-{rounding.effective_intermediate}"
        return label
    return rounding


def _mode_r(rounding: Rounding) -> Optional[int]:
    return rounding.r if isinstance(rounding, SrConfig) else None


def _make_rounder(fmt: FloatFormat, rounding: Rounding, stream) -> Callable[[WorkingReal], WorkingReal]:
    if isinstance(rounding, SrConfig):
        if rounding.variant == "exact":
            return lambda x: sr_exact(fmt, x, stream)
        r = rounding.r
        if rounding.variant == "limited":
            return lambda x: sr_limited(fmt, x, rounding, stream.next_bits(r))
        variant = rounding.variant
        return lambda x: p3109_round(fmt, x, variant, r, stream.next_bits(r))
    if rounding not in DETERMINISTIC_MODES:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return lambda x: round_deterministic(fmt, x, rounding)


def _uniform01(stream, fmt: FloatFormat) -> WorkingReal:
    """Uniform (0,1) draw at 53 bits, pre-rounded into fmt with nearest-even."""
    return round_deterministic(fmt, WorkingReal(1, stream.next_bits(53), -53), RNE)


def _parse(spec_value) -> WorkingReal:
    if isinstance(spec_value, WorkingReal):
        return spec_value
    return parse_working_real(str(spec_value)).value


def _errors(final: WorkingReal, exact: WorkingReal):
    abs_err = abs((final - exact).as_fraction())
    ref = abs(exact.as_fraction())
    rel = abs_err / ref if ref else None
    return abs_err, rel


def _run_tasks(spec: ExperimentSpec, tasks: list, fn) -> list[Row]:
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            rows = list(pool.map(fn, tasks))
    else:
        rows = [fn(t) for t in tasks]
    return rows


def _finish(spec: ExperimentSpec, rows: list[Row], mode_order: dict[str, int],
            extra_summary: Optional[dict] = None) -> ExperimentResult:
    rows.sort(key=lambda row: (mode_order[row.mode], row.n,
                               -1 if row.r is None else row.r, row.trial))
    summary = _summarize(rows)
    summary["kind"] = spec.kind
    summary["seed"] = spec.seed
    summary["fmt"] = spec.format().name
    summary["trials"] = spec.trials
    if extra_summary:
        summary.update(extra_summary)
    return ExperimentResult(spec.kind, spec.seed, rows, summary)


def _summarize(rows: list[Row]) -> dict:
    groups: dict[tuple, list[Row]] = {}
    for row in rows:
        groups.setdefault((row.mode, row.n, row.r), []).append(row)
    out = []
    for (mode, n, r), rs in sorted(
            groups.items(),
            key=lambda kv: (kv[0][0], kv[0][1], -1 if kv[0][2] is None else kv[0][2])):
        abs_errs = [float(x.abs_err) for x in rs]
        rel_errs = [float(x.rel_err) for x in rs if x.rel_err is not None]
        finals = [float(x.final) for x in rs]
        entry = {
            "mode": mode, "n": n, "r": r, "count": len(rs),
            "median_abs_err": statistics.median(abs_errs),
            "mean_final": statistics.fmean(finals),
            "median_final": statistics.median(finals),
        }
        if rel_errs:
            entry["median_rel_err"] = statistics.median(rel_errs)
            entry["mean_rel_err"] = statistics.fmean(rel_errs)
            entry["std_rel_err"] = statistics.stdev(rel_errs) if len(rel_errs) > 1 else 0.0
        if any(x.diverged for x in rs):
            entry["diverged"] = sum(1 for x in rs if x.diverged)
        out.append(entry)
    slopes = _fit_slopes(out)
    summary = {"groups": out}
    if slopes:
        summary["slopes"] = slopes
    return summary


def _fit_slopes(groups: list[dict]) -> dict:
    """Least-squares slope of log2(median rel err) against log2(n), per mode.

    Medians rather than means so that outlier trials cannot tilt the fit;
    only modes observed on at least five sizes get a slope.
    """
    per_mode: dict[str, list[tuple[float, float]]] = {}
    for g in groups:
        med = g.get("median_rel_err")
        if med and med > 0:
            per_mode.setdefault(g["mode"], []).append((math.log2(g["n"]), math.log2(med)))
    slopes = {}
    for mode, pts in per_mode.items():
        sizes = {x for x, _ in pts}
        if len(sizes) < 5:
            continue
        xbar = statistics.fmean(x for x, _ in pts)
        ybar = statistics.fmean(y for _, y in pts)
        den = sum((x - xbar) ** 2 for x, _ in pts)
        if den == 0:
            continue
        slopes[mode] = sum((x - xbar) * (y - ybar) for x, y in pts) / den
    return slopes


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _default_modes(spec: ExperimentSpec) -> list[tuple[str, Rounding]]:
    if spec.modes is not None:
        return list(spec.modes)
    return [(RNE, RNE), (_mode_label(spec.cfg), spec.cfg)]


def run_stagnation(spec: ExperimentSpec) -> ExperimentResult:
    """Repeated addition of a sub-half-ulp increment.

    Under nearest rounding every increment is rounded away and the
    accumulator freezes; stochastic rounding keeps the expected trajectory
    on the exact line.  Deterministic modes are run once (trial 0).
    """
    fmt = spec.format()
    acc0 = _parse(spec.acc0)
    delta = _parse(spec.delta)
    exact = acc0 + WorkingReal(delta.sign, delta.m * spec.n, delta.e)
    modes = _default_modes(spec)
    mode_order = {label: i for i, (label, _) in enumerate(modes)}

    tasks = []
    for mi, (label, rounding) in enumerate(modes):
        ntr = spec.trials if isinstance(rounding, SrConfig) else 1
        tasks.extend((mi, label, rounding, t) for t in range(ntr))

    def one(task):
        mi, label, rounding, trial = task
        stream = derive_stream(spec.seed, _stream_id(_PURPOSE_ROUND, mi, 0, trial))
        rnd = _make_rounder(fmt, rounding, stream)
        acc = acc0
        for _ in range(spec.n):
            acc = rnd(acc + delta)
        abs_err, rel = _errors(acc, exact)
        return Row(label, spec.n, _mode_r(rounding), trial, acc, exact, abs_err, rel)

    rows = _run_tasks(spec, tasks, one)
    return _finish(spec, rows, mode_order)


def _fold_sum(addends: list[WorkingReal], rnd) -> WorkingReal:
    s = addends[0]
    for a in addends[1:]:
        s = rnd(s + a)
    return s


def run_sum_growth(spec: ExperimentSpec) -> ExperimentResult:
    """Recursive summation of uniform (0,1) addends over a size grid.

    Emits per-size error statistics and, per mode, the fitted slope of
    log median relative error against log n.
    """
    fmt = spec.format()
    n_grid = list(spec.n_grid) if spec.n_grid else [1 << k for k in range(8, 17)]
    modes = _default_modes(spec)
    mode_order = {label: i for i, (label, _) in enumerate(modes)}

    tasks = [(mi, label, rounding, ni, n, t)
             for mi, (label, rounding) in enumerate(modes)
             for ni, n in enumerate(n_grid)
             for t in range(spec.trials)]

    def one(task):
        mi, label, rounding, ni, n, trial = task
        data = derive_stream(spec.seed, _stream_id(_PURPOSE_DATA, 0, ni, trial))
        addends = [_uniform01(data, fmt) for _ in range(n)]
        exact = ZERO
        for a in addends:
            exact = exact + a
        stream = derive_stream(spec.seed, _stream_id(_PURPOSE_ROUND, mi, ni, trial))
        final = _fold_sum(addends, _make_rounder(fmt, rounding, stream))
        abs_err, rel = _errors(final, exact)
        return Row(label, n, _mode_r(rounding), trial, final, exact, abs_err, rel)

    rows = _run_tasks(spec, tasks, one)
    return _finish(spec, rows, mode_order)


def run_r_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Sweep the random bit count at fixed length-n recursive summation.

    An ``r`` of zero in the grid degenerates to the deterministic
    intermediate rounding (no random bit can ever cross the threshold).
    Flags the knee: the smallest swept r whose median error is within 25%
    of the largest-r median, alongside the ceil(log2(n)/2) rule of thumb.
    """
    fmt = spec.format()
    r_grid = list(spec.r_grid) if spec.r_grid else [0, 1, 2, 4, 6, 8, 12, 16, 20, 24]
    intermediate = spec.cfg.intermediate if spec.cfg.variant == "limited" else None
    modes: list[tuple[str, Rounding]] = []
    for r in r_grid:
        if r == 0:
            modes.append(("sr-limited-r0", (intermediate or RZ)))
        else:
            modes.append((f"sr-limited-r{r}",
                          SrConfig("limited", r=r, intermediate=intermediate)))
    mode_order = {label: i for i, (label, _) in enumerate(modes)}

    tasks = [(mi, label, rounding, t)
             for mi, (label, rounding) in enumerate(modes)
             for t in range(spec.trials)]

    def one(task):
        mi, label, rounding, trial = task
        data = derive_stream(spec.seed, _stream_id(_PURPOSE_DATA, 0, 0, trial))
        addends = [_uniform01(data, fmt) for _ in range(spec.n)]
        exact = ZERO
        for a in addends:
            exact = exact + a
        stream = derive_stream(spec.seed, _stream_id(_PURPOSE_ROUND, mi, 0, trial))
        final = _fold_sum(addends, _make_rounder(fmt, rounding, stream))
        abs_err, rel = _errors(final, exact)
        r = r_grid[mi]
        return Row(label, spec.n, r, trial, final, exact, abs_err, rel)

    rows = _run_tasks(spec, tasks, one)
    heuristic = math.ceil(math.log2(spec.n) / 2)
    result = _finish(spec, rows, mode_order, {"heuristic_r": heuristic})
    result.summary["knee_r"] = _find_knee(result.summary["groups"])
    return result


def _find_knee(groups: list[dict]) -> Optional[int]:
    by_r = {g["r"]: g.get("median_rel_err") for g in groups if g.get("r") is not None}
    if not by_r:
        return None
    rmax = max(by_r)
    floor_err = by_r[rmax]
    if floor_err is None:
        return None
    for r in sorted(by_r):
        med = by_r[r]
        if med is not None and med <= 1.25 * floor_err:
            return r
    return rmax


def _pairwise_sum(addends: list[WorkingReal], rnd) -> WorkingReal:
    if len(addends) == 1:
        return addends[0]
    mid = len(addends) // 2
    left = _pairwise_sum(addends[:mid], rnd)
    right = _pairwise_sum(addends[mid:], rnd)
    return rnd(left + right)


def run_kernel_experiments(spec: ExperimentSpec) -> ExperimentResult:
    """Inner product, polynomial evaluation, or balanced-tree summation."""
    fmt = spec.format()
    kind = spec.kind
    modes = _default_modes(spec)
    mode_order = {label: i for i, (label, _) in enumerate(modes)}
    if kind == "dot" and spec.n_grid:
        n_grid = list(spec.n_grid)
    else:
        n_grid = [spec.degree if kind == "horner" else spec.n]
    point = _parse(spec.eval_point)

    tasks = [(mi, label, rounding, ni, n, t)
             for mi, (label, rounding) in enumerate(modes)
             for ni, n in enumerate(n_grid)
             for t in range(spec.trials)]

    def one(task):
        mi, label, rounding, ni, n, trial = task
        data = derive_stream(spec.seed, _stream_id(_PURPOSE_DATA, 0, ni, trial))
        stream = derive_stream(spec.seed, _stream_id(_PURPOSE_ROUND, mi, ni, trial))
        rnd = _make_rounder(fmt, rounding, stream)
        if kind == "dot":
            xs = [_uniform01(data, fmt) for _ in range(n)]
            ys = [_uniform01(data, fmt) for _ in range(n)]
            exact = ZERO
            acc = ZERO
            for xv, yv in zip(xs, ys):
                exact = exact + xv * yv
                acc = rnd(acc + rnd(xv * yv))
            final = acc
        elif kind == "horner":
            x = round_deterministic(fmt, point, RNE)
            coeffs = [_uniform01(data, fmt) for _ in range(n + 1)]
            exact = coeffs[0]
            final = coeffs[0]
            for c in coeffs[1:]:
                exact = exact * x + c
                final = rnd(rnd(final * x) + c)
        else:  # pairwise
            addends = [_uniform01(data, fmt) for _ in range(n)]
            exact = ZERO
            for a in addends:
                exact = exact + a
            final = _pairwise_sum(addends, rnd)
        abs_err, rel = _errors(final, exact)
        return Row(label, n, _mode_r(rounding), trial, final, exact, abs_err, rel)

    rows = _run_tasks(spec, tasks, one)
    return _finish(spec, rows, mode_order)


def run_gd(spec: ExperimentSpec) -> ExperimentResult:
    """Fixed-stepsize gradient descent on the quadratic 0.5*||w - w*||^2.

    Every arithmetic step (gradient, scaled update, new iterate) is rounded
    into the working format per mode.  The reference column is the final
    distance of the rounding-free run, which contracts geometrically, so
    any visible final distance is rounding-induced.  Divergence (norm above
    1e6) is reported in the row, not fatal.
    """
    fmt = spec.format()
    step = _parse(spec.step)
    modes = _default_modes(spec)
    mode_order = {label: i for i, (label, _) in enumerate(modes)}
    one_minus = WorkingReal(1, 1, 0) - step

    tasks = [(mi, label, rounding, t)
             for mi, (label, rounding) in enumerate(modes)
             for t in range(spec.trials)]

    def one(task):
        mi, label, rounding, trial = task
        data = derive_stream(spec.seed, _stream_id(_PURPOSE_DATA, 0, 0, trial))
        wstar = [_uniform01(data, fmt) for _ in range(spec.dimension)]
        stream = derive_stream(spec.seed, _stream_id(_PURPOSE_ROUND, mi, 0, trial))
        rnd = _make_rounder(fmt, rounding, stream)
        w = [ZERO] * spec.dimension
        diverged = False
        for _ in range(spec.iterations):
            for i in range(spec.dimension):
                g = rnd(w[i] - wstar[i])
                upd = rnd(step * g)
                w[i] = rnd(w[i] - upd)
            if any(abs(float(wi)) > 1e6 for wi in w):
                diverged = True
                break
        dist2 = Fraction(0)
        for wi, ti in zip(w, wstar):
            d = (wi - ti).as_fraction()
            dist2 += d * d
        final = math.sqrt(float(dist2))
        # rounding-free reference: w* - (1-step)**iters * w*, distance in closed form
        contr = one_minus.as_fraction() ** spec.iterations
        ref2 = contr * contr * sum(t.as_fraction() ** 2 for t in wstar)
        exact = math.sqrt(float(ref2))
        abs_err = Fraction(abs(final - exact))
        wnorm = math.sqrt(float(sum(t.as_fraction() ** 2 for t in wstar)))
        rel = Fraction(final / wnorm) if wnorm else None
        return Row(label, spec.dimension, _mode_r(rounding), trial, final, exact,
                   abs_err, rel, diverged)

    rows = _run_tasks(spec, tasks, one)
    return _finish(spec, rows, mode_order)


# ---------------------------------------------------------------------------
# decimal demo
# ---------------------------------------------------------------------------

_PI_DIGITS = 314159265358979323846  # value: this integer * 10**-20
_PI_POW = 20
_GRID_DECIMALS = 3  # rounding to candidates 3.141 and 3.142


@dataclass(frozen=True)
class PiDemoReport:
    """Decimal rounding of pi to four significant digits, done in exact
    base-10 integer arithmetic (kept apart from the binary value path,
    since negative powers of ten are not dyadic)."""

    value: Fraction
    lower: Fraction
    upper: Fraction
    q: Fraction
    round_up_error: Fraction
    round_down_error: Fraction
    expected_sr_value: Fraction
    note: str

    def as_dict(self) -> dict:
        def rat(f: Fraction) -> str:
            return f"{f.numerator}/{f.denominator}"
        return {
            "value": rat(self.value),
            "lower": rat(self.lower),
            "upper": rat(self.upper),
            "q": rat(self.q),
            "q_decimal": _dec_str(self.q),
            "round_up_error": rat(self.round_up_error),
            "round_up_error_decimal": _dec_str(self.round_up_error),
            "round_down_error": rat(self.round_down_error),
            "round_down_error_decimal": _dec_str(self.round_down_error),
            "expected_sr_value": rat(self.expected_sr_value),
            "note": self.note,
        }


def _dec_str(f: Fraction) -> str:
    """Exact decimal expansion; valid whenever the denominator is 2**a * 5**b."""
    sign = "-" if f < 0 else ""
    f = abs(f)
    den = f.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise ValueError("not a terminating decimal")
    k = max(twos, fives)
    num = f.numerator * 2 ** (k - twos) * 5 ** (k - fives)
    digits = str(num).rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}" if k else sign + digits

def run_pi_demo() -> PiDemoReport:
    """Exact probabilities and errors for rounding 3.14159265358979323846 to
    three decimal places."""
    scale = 10 ** _PI_POW
    grid = 10 ** (_PI_POW - _GRID_DECIMALS)  # one grid step, in units of 10**-20
    lower_int = (_PI_DIGITS // grid) * grid
    upper_int = lower_int + grid
    value = Fraction(_PI_DIGITS, scale)
    lower = Fraction(lower_int, scale)
    upper = Fraction(upper_int, scale)
    q = Fraction(_PI_DIGITS - lower_int, grid)
    up_err = upper - value
    down_err = lower - value
    expected = q * upper + (1 - q) * lower
    note = ("rounding up happens with probability q (about 59%); drawing the "
            "uniform with 16 decimal digits of precision makes the comparison "
            "against q exact, which is exact stochastic rounding for this value")
    return PiDemoReport(value, lower, upper, q, up_err, down_err, expected, note)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_RUNNERS = {
    "stagnation": run_stagnation,
    "sum_growth": run_sum_growth,
    "r_sweep": run_r_sweep,
    "dot": run_kernel_experiments,
    "horner": run_kernel_experiments,
    "pairwise": run_kernel_experiments,
    "gd": run_gd,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run any row-producing experiment kind (pi_demo reports separately)."""
    if spec.kind == "pi_demo":
        raise ValueError("pi_demo produces a report, not rows; call run_pi_demo()")
    return _RUNNERS[spec.kind](spec)
