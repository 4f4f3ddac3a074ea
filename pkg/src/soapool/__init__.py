"""Channel-partitioned second-order pooling of local point features."""
from ._backend import BACKEND
from .aggregate import (
    AggregatorSpec,
    CpsParams,
    Descriptor,
    PartitionConfig,
    SketchConfig,
    cbp_ts,
    covariance,
    cps,
    cps_from_covariance,
    descriptor_dim,
    full_soa,
    gem,
    kernel_soa,
    mac,
    partition,
    spoc,
)
from .retrieve import EvalProtocol, PlaceDatabase, PlaceRecord, evaluate, load_db, save_db
from .symmat import NsConfig, ns_sqrt, sqrt_eig, sym_eig, upper_tri_vec

__version__ = "0.1.0"
