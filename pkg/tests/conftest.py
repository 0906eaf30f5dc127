import numpy as np
import pytest

from drcurve.casefile import load_case, reference_case_path
from drcurve.idc import EssParams, FlexibleWorkload, IdcCase, IdcParams, TimeGrid
from drcurve.uncertainty import QuantityBand, UncertaintyModel


@pytest.fixture(scope="session")
def reference_case():
    return load_case(reference_case_path())


def build_tiny_case(n_workloads=1, ess_power=10.0, ess_energy=8.0,
                    price_halfwidth=0.2, dg=(5.0, 5.0), term_price=2.0):
    """Single data center, two slots; small enough to reason about by hand."""
    T = 2
    idc = IdcParams(
        "only", pue=[1.5] * T, nominal_power=[100.0] * T,
        ess=EssParams(ess_energy, ess_energy / 2.0, ess_power),
        it_interactive=[40.0, 44.0], dg_output=list(dg),
        elec_price=[0.10, 0.14],
    )
    workloads = tuple(
        FlexibleWorkload(f"wl{k + 1}", "only", [8.0 - 2.0 * k] * T, term_price + 0.8 * k)
        for k in range(n_workloads)
    )
    unc = UncertaintyModel(
        price=QuantityBand.from_scalars(np.array([idc.elec_price]), 0.05, 0.2, price_halfwidth),
        dg_output=QuantityBand.from_scalars(np.array([idc.dg_output]), 0.10, 0.3, 0.4),
        it_power=QuantityBand.from_scalars(np.array([idc.it_interactive]), 0.05, 0.25, 0.2),
    )
    return IdcCase(TimeGrid(T), (idc,), workloads, unc, 0.0, 0.5)


@pytest.fixture()
def tiny_case():
    return build_tiny_case()
