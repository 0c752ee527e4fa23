"""Vendor conversion profiles and microscaling block quantization.

The documented hardware conversion semantics live in a JSON registry shipped
with the package (``data/profiles.json``): per vendor, the random bit width
of each source/destination pair, whether the conversion passes through a
binary32 nearest-even stage, how destination subnormals widen the random
bit string, flush-to-zero thresholds, and where the random bits come from.
Cells a vendor does not specify are simply absent.

None of this claims bit-exact replication of silicon - PRNG-to-bit mappings
are proprietary - but each rule's SR arithmetic is exact for the documented
bit width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .entropy import BitSource, derive_stream
from .formats import (
    DomainError,
    FloatFormat,
    FloatValue,
    SpecialValue,
    WorkingReal,
    ZERO,
    get_format,
    is_representable,
    parse_working_real,
)
from .kernels import (
    RNE,
    ContractError,
    SrConfig,
    round_any,
    round_deterministic,
    sr_limited,
    _propagate_special,
)


class UnknownVendorError(KeyError):
    """Vendor name not present in the registry."""


@dataclass(frozen=True)
class ConversionRule:
    """One vendor conversion: src format -> dst format with r random bits.

    ``r_min`` is the base random bit count; when ``subnormal_rule`` is
    ``extend`` the count grows by the destination value's leading-zero
    deficit (how far below the normal range it lands), capped at ``r_max``.
    ``up_to`` marks counts the vendor documents only as an upper bound.
    """

    vendor: str
    src_fmt: str
    dst_fmt: str
    r_min: int
    r_max: int
    up_to: bool = False
    two_stage: bool = False
    subnormal_rule: str = "fixed"  # or "extend"
    flush_threshold: WorkingReal | None = None
    random_word_width: int | None = None
    entropy_source: str = "external"  # or "data_lsb"

    @property
    def r_fixed(self) -> int:
        return self.r_min

    def effective_r(self, dst: FloatFormat, y: WorkingReal) -> int:
        """Random bits consumed for this particular value."""
        if self.subnormal_rule != "extend" or y.m == 0:
            return self.r_min
        top = y.e + y.m.bit_length() - 1
        deficit = dst.emin - top
        if deficit <= 0:
            return self.r_min
        return min(self.r_max, self.r_min + deficit)


@dataclass(frozen=True)
class VendorProfile:
    vendor: str
    rules: tuple[ConversionRule, ...]
    notes: str = ""

    def find(self, src: str, dst: str) -> ConversionRule | None:
        for rule in self.rules:
            if rule.src_fmt == src and rule.dst_fmt == dst:
                return rule
        return None


def _load_raw(path=None) -> dict:
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    data = resources.files("srkit").joinpath("data/profiles.json").read_text("utf-8")
    return json.loads(data)


def load_registry(path=None) -> dict[str, VendorProfile]:
    """Registry of vendor profiles, keyed by lowercase vendor name.

    ``path`` overrides the packaged JSON document (same schema).
    """
    raw = _load_raw(path)
    registry: dict[str, VendorProfile] = {}
    for v in raw["vendors"]:
        rules = []
        for r in v["rules"]:
            thr = r.get("flush_threshold")
            rules.append(ConversionRule(
                vendor=v["name"],
                src_fmt=r["src"],
                dst_fmt=r["dst"],
                r_min=r["r_min"],
                r_max=r["r_max"],
                up_to=r.get("up_to", False),
                two_stage=r.get("two_stage", False),
                subnormal_rule=r.get("subnormal_rule", "fixed"),
                flush_threshold=parse_working_real(thr).value if thr else None,
                random_word_width=r.get("random_word_width"),
                entropy_source=r.get("entropy_source", "external"),
            ))
        registry[v["name"]] = VendorProfile(v["name"], tuple(rules), v.get("notes", ""))
    return registry


_default_registry: dict[str, VendorProfile] | None = None


def default_registry() -> dict[str, VendorProfile]:
    global _default_registry
    if _default_registry is None:
        _default_registry = load_registry()
    return _default_registry


def profile_lookup(vendor: str, src: str, dst: str,
                   registry: dict[str, VendorProfile] | None = None) -> ConversionRule | None:
    """The rule for (vendor, src, dst), or None where the vendor specifies
    no such conversion.  Unknown vendors raise."""
    registry = registry if registry is not None else default_registry()
    key = vendor.strip().lower()
    if key not in registry:
        raise UnknownVendorError(f"unknown vendor {vendor!r}; known: {', '.join(sorted(registry))}")
    src_name = get_format(src).name
    dst_name = get_format(dst).name
    return registry[key].find(src_name, dst_name)


# ---------------------------------------------------------------------------
# conversion execution
# ---------------------------------------------------------------------------

def convert(rule: ConversionRule, x: FloatValue, entropy: BitSource | int | None = None) -> FloatValue:
    """Apply a vendor conversion rule to x.

    Order of operations: special values propagate per the destination's
    support; magnitudes below the flush threshold become signed zero; the
    two-stage rules round to binary32 with nearest-even; then limited SR
    with the rule's (possibly subnormal-extended) bit count, truncating
    intermediate, saturating on overflow.  ``entropy`` is a bit source or a
    raw random integer word; data-derived rules take their bits from the
    input significand and need no entropy argument.
    """
    dst = get_format(rule.dst_fmt)
    if isinstance(x, SpecialValue):
        return _propagate_special(dst, x)
    y = x
    if rule.flush_threshold is not None and y.m and abs(y) < rule.flush_threshold:
        return WorkingReal(y.sign, 0, 0)
    if rule.two_stage:
        y = round_deterministic(get_format("binary32"), y, RNE)
        if isinstance(y, SpecialValue):
            return _propagate_special(dst, y)
    r_eff = rule.effective_r(dst, y)
    draw = _draw_bits(rule, y, r_eff, entropy)
    return _saturating_sr(dst, y, r_eff, draw)


def _draw_bits(rule: ConversionRule, y: WorkingReal, r_eff: int, entropy) -> int:
    if rule.entropy_source == "data_lsb":
        src = get_format(rule.src_fmt)
        c = _significand_int(src, y)
        return c & ((1 << r_eff) - 1)
    if entropy is None:
        raise ContractError(f"rule {rule.vendor} {rule.src_fmt}->{rule.dst_fmt} needs entropy")
    if isinstance(entropy, int):
        return entropy & ((1 << r_eff) - 1)  # low bits of the supplied word
    return entropy.next_bits(r_eff)


def _significand_int(fmt: FloatFormat, x: WorkingReal) -> int:
    """x's significand as a p-bit integer (the bit field a register would hold)."""
    if x.m == 0:
        return 0
    if not is_representable(fmt, x):
        raise DomainError(f"{x} is not a {fmt.name} value; data-derived bits need the bit pattern")
    top = x.e + x.m.bit_length() - 1
    ge = (top if top >= fmt.emin else fmt.emin) - fmt.precision_p + 1
    return x.m << (x.e - ge)


def _saturating_sr(dst: FloatFormat, y: WorkingReal, r: int, draw: int) -> WorkingReal:
    if y.m and not dst.in_range(y):
        mx = dst.max_finite
        return -mx if y.sign < 0 else mx
    cfg = SrConfig("limited", r=r)
    return sr_limited(dst, y, cfg, draw)


def convert_packed_pair(rule: ConversionRule, x1: FloatValue, x2: FloatValue,
                        random_word: int) -> tuple[FloatValue, FloatValue]:
    """Round two values with the two halves of one 32-bit random word.

    The first value takes the low 16 bits and the second the high 16; the
    instruction sets leave the assignment open, so this pins one.  Each half
    is truncated to the rule's bit count when that is below 16.
    """
    if rule.random_word_width != 32:
        raise ContractError("packed-pair conversion needs a rule with a 32-bit random word")
    if random_word < 0 or random_word >> 32:
        raise ContractError("random word must fit in 32 bits")
    lo_half = random_word & 0xFFFF
    hi_half = random_word >> 16
    out = []
    for x, half in ((x1, lo_half), (x2, hi_half)):
        dst = get_format(rule.dst_fmt)
        if isinstance(x, SpecialValue):
            out.append(_propagate_special(dst, x))
            continue
        y = x
        if rule.flush_threshold is not None and y.m and abs(y) < rule.flush_threshold:
            out.append(WorkingReal(y.sign, 0, 0))
            continue
        if rule.two_stage:
            y = round_deterministic(get_format("binary32"), y, RNE)
        r_eff = min(rule.effective_r(dst, y), 16)
        out.append(_saturating_sr(dst, y, r_eff, half & ((1 << r_eff) - 1)))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# microscaling block quantization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockFormatSpec:
    """Group of narrow elements sharing one scale factor."""

    group_size: int
    element_fmt: FloatFormat
    scale_fmt: str  # "e8m0" or "e4m3"

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group size must be positive")
        if self.scale_fmt not in ("e8m0", "e4m3"):
            raise ValueError("scale format must be 'e8m0' or 'e4m3'")


MXFP4 = BlockFormatSpec(32, get_format("fp4-e2m1"), "e8m0")
NVFP4 = BlockFormatSpec(16, get_format("fp4-e2m1"), "e4m3")

# power-of-two exponents expressible by each scale format
_SCALE_EXP_RANGE = {"e8m0": (-127, 127), "e4m3": (-9, 8)}


@dataclass(frozen=True)
class BlockQuantResult:
    scales: tuple[WorkingReal, ...]
    elements: tuple[WorkingReal, ...]
    padded: bool
    group_size: int


def block_quantize(values, spec: BlockFormatSpec, rounding=RNE, seed: int = 0) -> BlockQuantResult:
    """Quantize a sequence into shared-scale groups of narrow elements.

    Per group the scale is the smallest power of two s with max|v|/s inside
    the element format (clamped to what the scale format can express; the
    e4m3 scale is that power of two encoded by nearest-even, which is exact
    in range).  Each v/s is computed without error and rounded into the
    element format with ``rounding`` (a deterministic mode or SrConfig);
    stochastic rounding derives one stream per group from ``seed`` so the
    result does not depend on how groups are scheduled.  A short final group
    is zero-padded and flagged.
    """
    vals = list(values)
    if any(isinstance(v, SpecialValue) for v in vals):
        raise DomainError("block quantization takes finite values only")
    g = spec.group_size
    padded = False
    if len(vals) % g:
        padded = True
        vals.extend([ZERO] * (g - len(vals) % g))
    if not vals:
        raise ValueError("need at least one value")

    elem = spec.element_fmt
    lo_k, hi_k = _SCALE_EXP_RANGE[spec.scale_fmt]
    scales: list[WorkingReal] = []
    elements: list[WorkingReal] = []
    for gi in range(0, len(vals), g):
        group = vals[gi:gi + g]
        maxmag = max((abs(v) for v in group), default=ZERO)
        if maxmag.m == 0:
            k = lo_k
        else:
            k = _ceil_log2_ratio(maxmag, elem.max_finite)
            k = min(max(k, lo_k), hi_k)
        scale = WorkingReal(1, 1, k)
        scales.append(scale)
        entropy = derive_stream(seed, gi // g) if isinstance(rounding, SrConfig) else None
        for v in group:
            scaled = v.scale2(-k)
            if scaled.m and not elem.in_range(scaled):
                mx = elem.max_finite
                elements.append(-mx if scaled.sign < 0 else mx)
                continue
            elements.append(round_any(elem, scaled, rounding, entropy))
    return BlockQuantResult(tuple(scales), tuple(elements), padded, g)


def block_dequantize(result: BlockQuantResult) -> list[WorkingReal]:
    """Exact reconstruction scale * element for every slot."""
    out = []
    for i, e in enumerate(result.elements):
        out.append(result.scales[i // result.group_size] * e)
    return out


def _ceil_log2_ratio(num: WorkingReal, den: WorkingReal) -> int:
    """Smallest k with 2**k >= num/den, both positive."""
    k = (num.e + num.m.bit_length()) - (den.e + den.m.bit_length()) + 1
    # refine: decrement while 2**(k-1) still covers the ratio
    while _pow2_ge(k - 1, num, den):
        k -= 1
    while not _pow2_ge(k, num, den):
        k += 1
    return k


def _pow2_ge(k: int, num: WorkingReal, den: WorkingReal) -> bool:
    # 2**k * den >= num  <=>  den.m * 2**(k+den.e) >= num.m * 2**num.e
    e1 = k + den.e
    e2 = num.e
    if e1 >= e2:
        return (den.m << (e1 - e2)) >= num.m
    return den.m >= (num.m << (e2 - e1))
