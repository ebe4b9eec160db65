"""FTL variants and the factory keyed by the ``ftl`` config value."""

from .base import CLASSIFICATIONS, DOUBLE, SINGLE, TRIPLE, UNMAPPED_READ, BaseFtl, ReadOutcome
from .demand import DemandFtl, TpftlFtl
from .ideal import IdealFtl
from .leaftl import LeaFtlSim, LeaSegment
from .learnedftl import LearnedFtl

FTL_KINDS = {
    "ideal": IdealFtl,
    "dftl": DemandFtl,
    "tpftl": TpftlFtl,
    "leaftl": LeaFtlSim,
    "learnedftl": LearnedFtl,
}


def make_ftl(kind: str, geom, **kwargs) -> BaseFtl:
    try:
        cls = FTL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown FTL kind {kind!r}; expected one of {sorted(FTL_KINDS)}") from None
    return cls(geom, **kwargs)


__all__ = [
    "BaseFtl", "ReadOutcome", "IdealFtl", "DemandFtl", "TpftlFtl", "LeaFtlSim", "LeaSegment",
    "LearnedFtl", "FTL_KINDS", "make_ftl", "SINGLE", "DOUBLE", "TRIPLE", "UNMAPPED_READ",
    "CLASSIFICATIONS",
]
