"""Energy-aware computational and representational cost metrics."""

from deepkm.energy.metrics import (
    REP_FACTOR,
    EnergyReport,
    LayerEnergy,
    act_rep_cost,
    comp_cost,
    dot_product_fa,
    r_squared,
    total_energy,
    weight_rep_cost,
)
from deepkm.energy.spec import (
    EnergyLayer,
    NetworkSpec,
    load_network_spec,
    network_spec_from_architecture,
    prune_filters,
    share_weights,
    with_fc_precision,
)

__all__ = [
    "REP_FACTOR",
    "EnergyLayer",
    "EnergyReport",
    "LayerEnergy",
    "NetworkSpec",
    "act_rep_cost",
    "comp_cost",
    "dot_product_fa",
    "load_network_spec",
    "network_spec_from_architecture",
    "prune_filters",
    "r_squared",
    "share_weights",
    "total_energy",
    "weight_rep_cost",
    "with_fc_precision",
]
