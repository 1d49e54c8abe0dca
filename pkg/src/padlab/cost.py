"""Exact integer accounting of parameters and multiply-accumulate operations.

Counting convention (inferred; it reproduces the reference table values for
all four full-size families at 224x224 to their printed precision):

    conv2d      k_h * k_w * C_in * C_out * H_out * W_out, plus one op per
                output element when the layer has a bias
    linear      in * out, plus out for the bias
    batchnorm   2 ops per element (scale, shift)
    relu        2 ops per element (compare, select)
    pooling     2 ops per input element (max, average and adaptive alike)
    dropout, flatten, residual add: zero

All counts are exact integers; GMACs and percentage columns are derived at
report time and never stored rounded.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .errors import ConfigError, GeometryError
from .models import FAMILIES, Model, ModelSpec, build_model, normalize_family
from .rng import Rng

COST_FAMILIES = ("vgg11-bn", "vgg16-bn", "resnet18", "resnet50")


def count_params(model: Model) -> int:
    return sum(var.value.size for _, var in model.named_parameters())


def count_macs(model: Model, input_size: int | None = None) -> int:
    """MACs for one forward pass of a single image at `input_size`."""
    spec = model.spec
    if input_size is not None and input_size != spec.input_size:
        spec = ModelSpec(spec.family, spec.pad_channel, spec.num_classes,
                         spec.input_channels, input_size, spec.padding_mode)
        model = build_model(spec, Rng(0), init="zeros")
    try:
        return sum(macs for _, _, macs in model.cost_rows())
    except GeometryError as exc:
        raise GeometryError(f"input size {spec.input_size} too small "
                            f"for {spec.family}: {exc}") from exc


@dataclass
class CostRow:
    family: str
    variant: str            # "base" or "pc"
    params: int
    macs: int
    params_delta: int = 0   # vs the paired base row
    macs_delta: int = 0

    @property
    def gmacs(self) -> float:
        return self.macs / 1e9

    @property
    def params_pct(self) -> float:
        base = self.params - self.params_delta
        return 100.0 * self.params_delta / base if base else 0.0

    @property
    def macs_pct(self) -> float:
        base = self.macs - self.macs_delta
        return 100.0 * self.macs_delta / base if base else 0.0


@dataclass
class CostReport:
    input_size: int
    rows: list[CostRow] = field(default_factory=list)

    def row(self, family: str, variant: str) -> CostRow:
        family = normalize_family(family)
        for r in self.rows:
            if r.family == family and r.variant == variant:
                return r
        raise KeyError((family, variant))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("family,variant,params,params_delta,params_pct,"
                  "gmacs,gmacs_delta,gmacs_pct\n")
        for r in self.rows:
            out.write(f"{r.family},{r.variant},{r.params},{r.params_delta},"
                      f"{r.params_pct:.6f},{r.gmacs:.6f},"
                      f"{r.macs_delta / 1e9:.6f},{r.macs_pct:.6f}\n")
        return out.getvalue()

    def to_text(self) -> str:
        lines = [f"costs at input size {self.input_size} "
                 "(params exact, GMACs = MACs / 1e9)",
                 f"{'family':<12} {'variant':<7} {'params':>12} {'+params':>8} "
                 f"{'%':>8} {'GMACs':>8} {'+GMACs':>7} {'%':>7}"]
        for r in self.rows:
            if r.variant == "base":
                lines.append(f"{r.family:<12} {r.variant:<7} {r.params:>12} "
                             f"{'':>8} {'':>8} {r.gmacs:>8.2f} {'':>7} {'':>7}")
            else:
                lines.append(f"{r.family:<12} {r.variant:<7} {r.params:>12} "
                             f"{'+' + str(r.params_delta):>8} "
                             f"{r.params_pct:>+8.4f} {r.gmacs:>8.2f} "
                             f"{r.macs_delta / 1e9:>+7.2f} {r.macs_pct:>+7.3f}")
        return "\n".join(lines) + "\n"


def cost_pair(family: str, input_size: int, num_classes: int = 1000) -> list[CostRow]:
    """Base and pad-channel rows for one family."""
    family = normalize_family(family)
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    rows = []
    base = None
    for variant, pc in (("base", False), ("pc", True)):
        spec = ModelSpec(family, pad_channel=pc, num_classes=num_classes,
                         input_size=input_size)
        model = build_model(spec, Rng(0), init="zeros")
        row = CostRow(family, variant, count_params(model), count_macs(model))
        if variant == "base":
            base = row
        else:
            row.params_delta = row.params - base.params
            row.macs_delta = row.macs - base.macs
        rows.append(row)
    return rows


def cost_table(families=COST_FAMILIES, input_size: int = 224,
               num_classes: int = 1000) -> CostReport:
    report = CostReport(input_size)
    for family in families:
        report.rows.extend(cost_pair(family, input_size, num_classes))
    return report
