"""Energy-aware cost metrics.

Computational cost is counted in 1-bit full adders for ripple-carry adders
and Baugh-Wooley multipliers. Representational cost is bits times the number
of times they are loaded. Both are normalized to MACs and combined as

    total = comp_mac + REP_FACTOR * rep_mac

Usage counts, border effects ignored:
    conv  N_w = H_out * W_out        |W| = s*s*c*m'  (s*K when shared)
          N_x = m' * s*s / stride^2  |X| = c * H_in * W_in
    fc    N_w = 1                    |W| = in * out' (K when shared)
          N_x = out'                 |X| = in
where m' = m * (1 - pruned_fraction). Index bits of shared layers are not
counted. One MAC costs dot_product_fa(1, B_w, B_x) = B_w * B_x adders and
moves B_w + B_x bits.
"""

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from deepkm.core.exceptions import ContractViolation, UndefinedFitError
from deepkm.energy.spec import EnergyLayer, NetworkSpec

REP_FACTOR = 6.0

# (title, width, decimals) of the text report columns after the layer name
_TEXT_COLUMNS = (
    ("comp_fa", 16, 0),
    ("w_rep", 16, 0),
    ("x_rep", 16, 0),
    ("comp_mac", 14, 1),
    ("rep_mac", 14, 1),
    ("total_mac", 14, 1),
)


def dot_product_fa(d: int, b_w: int, b_x: int) -> int:
    """Full adders for a length-d dot product: d b_w b_x + (d-1)(b_x + b_w + ceil(log2 d) - 1)."""
    if d < 1:
        raise ContractViolation(f"dot product length must be >= 1, got {d}")
    if b_w < 1 or b_x < 1:
        raise ContractViolation(f"precisions must be >= 1, got b_w={b_w} b_x={b_x}")
    return d * b_w * b_x + (d - 1) * (b_x + b_w + (d - 1).bit_length() - 1)


def _kept(layer: EnergyLayer) -> float:
    return layer.outputs * (1.0 - layer.pruned_fraction)


def layer_comp_cost(spec: NetworkSpec, layer: EnergyLayer) -> float:
    b_w, b_x = spec.precision(layer)
    return _kept(layer) * layer.h_out * layer.w_out * dot_product_fa(layer.dot_length, b_w, b_x)


def layer_weight_rep_cost(spec: NetworkSpec, layer: EnergyLayer) -> float:
    b_w, _ = spec.precision(layer)
    uses = layer.h_out * layer.w_out
    if layer.shared_k is None:
        unique = layer.dot_length * _kept(layer)
    elif layer.kind == "conv":
        unique = float((layer.s or 1) * layer.shared_k)
    else:
        unique = float(layer.shared_k)
    return uses * unique * b_w


def layer_act_rep_cost(spec: NetworkSpec, layer: EnergyLayer) -> float:
    _, b_x = spec.precision(layer)
    if layer.kind == "conv":
        assert layer.s and layer.c and layer.h_in and layer.w_in
        size = layer.c * layer.h_in * layer.w_in
        uses = _kept(layer) * layer.s * layer.s / layer.stride**2
    else:
        assert layer.in_dim
        size = layer.in_dim
        uses = _kept(layer)
    return uses * size * b_x


def comp_cost(spec: NetworkSpec) -> float:
    return sum(layer_comp_cost(spec, layer) for layer in spec.layers)


def weight_rep_cost(spec: NetworkSpec) -> float:
    return sum(layer_weight_rep_cost(spec, layer) for layer in spec.layers)


def act_rep_cost(spec: NetworkSpec) -> float:
    return sum(layer_act_rep_cost(spec, layer) for layer in spec.layers)


class LayerEnergy(BaseModel):
    name: str
    comp_cost_fa: float = Field(ge=0)
    weight_rep_cost: float = Field(ge=0)
    act_rep_cost: float = Field(ge=0)
    comp_mac: float = Field(ge=0)
    rep_mac: float = Field(ge=0)

    @property
    def total_mac(self) -> float:
        return self.comp_mac + REP_FACTOR * self.rep_mac


class EnergyReport(BaseModel):
    """Per-layer costs and their totals for one NetworkSpec."""

    network: str = "network"
    layers: list[LayerEnergy] = Field(default_factory=list)

    @property
    def comp_cost_fa(self) -> float:
        return sum(layer.comp_cost_fa for layer in self.layers)

    @property
    def weight_rep_cost(self) -> float:
        return sum(layer.weight_rep_cost for layer in self.layers)

    @property
    def act_rep_cost(self) -> float:
        return sum(layer.act_rep_cost for layer in self.layers)

    @property
    def comp_mac(self) -> float:
        return sum(layer.comp_mac for layer in self.layers)

    @property
    def rep_mac(self) -> float:
        return sum(layer.rep_mac for layer in self.layers)

    @property
    def total_energy_mac(self) -> float:
        return self.comp_mac + REP_FACTOR * self.rep_mac

    def summary(self) -> dict[str, float]:
        return {
            "comp_cost_fa": self.comp_cost_fa,
            "weight_rep_cost": self.weight_rep_cost,
            "act_rep_cost": self.act_rep_cost,
            "comp_mac": self.comp_mac,
            "rep_mac": self.rep_mac,
            "total_energy_mac": self.total_energy_mac,
        }

    def to_text(self) -> str:
        """Fixed-column text table, stable across runs for diffing."""
        lines = [
            f"# energy report: {self.network}",
            "# N_w = H_out*W_out, N_x = m*s^2/stride^2 (borders ignored); index bits excluded",
            f"# total_mac = comp_fa/(B_w*B_x) + {REP_FACTOR:g} * (w_rep + x_rep)/(B_w + B_x)",
            f"{'layer':<12}" + "".join(f" {title:>{width}}" for title, width, _ in _TEXT_COLUMNS),
        ]
        rows: list[tuple[str, tuple[float, ...]]] = [
            (
                layer.name,
                (layer.comp_cost_fa, layer.weight_rep_cost, layer.act_rep_cost,
                 layer.comp_mac, layer.rep_mac, layer.total_mac),
            )
            for layer in self.layers
        ]
        rows.append((
            "TOTAL",
            (self.comp_cost_fa, self.weight_rep_cost, self.act_rep_cost,
             self.comp_mac, self.rep_mac, self.total_energy_mac),
        ))
        for name, values in rows:
            cells = "".join(
                f" {value:>{width}.{digits}f}"
                for value, (_, width, digits) in zip(values, _TEXT_COLUMNS)
            )
            lines.append(f"{name:<12}{cells}")
        return "\n".join(lines) + "\n"


def total_energy(spec: NetworkSpec) -> EnergyReport:
    layers = []
    for layer in spec.layers:
        b_w, b_x = spec.precision(layer)
        comp = layer_comp_cost(spec, layer)
        wrep = layer_weight_rep_cost(spec, layer)
        xrep = layer_act_rep_cost(spec, layer)
        layers.append(
            LayerEnergy(
                name=layer.name,
                comp_cost_fa=comp,
                weight_rep_cost=wrep,
                act_rep_cost=xrep,
                comp_mac=comp / dot_product_fa(1, b_w, b_x),
                rep_mac=(wrep + xrep) / (b_w + b_x),
            )
        )
    return EnergyReport(network=spec.name, layers=layers)


def r_squared(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line of ys on xs."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ContractViolation(
            f"need two equal-length series of at least 2 points, got {x.shape} and {y.shape}"
        )
    if np.ptp(x) == 0:
        raise UndefinedFitError("xs are constant; the linear fit is undefined")
    fit = stats.linregress(x, y)
    residual = y - (fit.intercept + fit.slope * x)
    ss_res = float(residual @ residual)
    ss_tot = float(np.square(y - y.mean()).sum())
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot
