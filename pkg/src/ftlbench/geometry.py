"""Flash geometry and the PPN / VPPN address codecs.

A physical page number orders its fields channel, way, plane, block, page
(most to least significant), so one block occupies a contiguous PPN range.

A virtual page number reorders the same fields as block, page, plane, way,
channel.  Pages handed out in the allocation order (channel fastest, then
way, then plane, then page, then block) therefore receive consecutive VPPNs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .errors import AddressError

_U64 = 1 << 64


class PageAddr(NamedTuple):
    channel: int
    way: int
    plane: int
    block: int
    page: int


@dataclass(frozen=True)
class FlashGeometry:
    channels: int = 8
    ways_per_channel: int = 8
    planes_per_chip: int = 1
    blocks_per_plane: int = 256
    pages_per_block: int = 512
    page_size: int = 4096

    def __post_init__(self):
        for name in ("channels", "ways_per_channel", "planes_per_chip",
                     "blocks_per_plane", "pages_per_block", "page_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise AddressError(f"geometry field {name} must be an integer >= 1, got {value!r}")
        if self.page_size & (self.page_size - 1):
            raise AddressError(f"page_size must be a power of two, got {self.page_size}")
        if self.total_pages >= _U64:
            raise AddressError("total page count does not fit in 64 bits")

    @property
    def chips(self) -> int:
        return self.channels * self.ways_per_channel

    @property
    def parallel_units(self) -> int:
        """Number of (channel, way, plane) units; one superblock spans all of them."""
        return self.channels * self.ways_per_channel * self.planes_per_chip

    @property
    def pages_per_chip(self) -> int:
        return self.planes_per_chip * self.blocks_per_plane * self.pages_per_block

    @property
    def total_blocks(self) -> int:
        return self.parallel_units * self.blocks_per_plane

    @property
    def total_pages(self) -> int:
        return self.total_blocks * self.pages_per_block

    @property
    def superblock_pages(self) -> int:
        return self.parallel_units * self.pages_per_block

    def chip_of_ppn(self, ppn: int) -> int:
        return ppn // self.pages_per_chip

    def block_of_ppn(self, ppn: int) -> int:
        """Global block index (blocks are contiguous PPN ranges)."""
        return ppn // self.pages_per_block

    def chip_of_block(self, block: int) -> int:
        return block // (self.planes_per_chip * self.blocks_per_plane)


def _check_addr(addr: PageAddr, geom: FlashGeometry) -> None:
    limits = (geom.channels, geom.ways_per_channel, geom.planes_per_chip,
              geom.blocks_per_plane, geom.pages_per_block)
    for name, value, limit in zip(PageAddr._fields, addr, limits):
        if not 0 <= value < limit:
            raise AddressError(f"{name} index {value} out of range [0, {limit})")


def _check_page_number(value: int, geom: FlashGeometry, what: str) -> None:
    if not 0 <= value < geom.total_pages:
        raise AddressError(f"{what} {value} out of range [0, {geom.total_pages})")


def compose_ppn(addr: PageAddr, geom: FlashGeometry) -> int:
    _check_addr(addr, geom)
    ch, way, plane, block, page = addr
    return ((((ch * geom.ways_per_channel + way) * geom.planes_per_chip + plane)
             * geom.blocks_per_plane + block) * geom.pages_per_block + page)


def decompose_ppn(ppn: int, geom: FlashGeometry) -> PageAddr:
    _check_page_number(ppn, geom, "PPN")
    ppn, page = divmod(ppn, geom.pages_per_block)
    ppn, block = divmod(ppn, geom.blocks_per_plane)
    ppn, plane = divmod(ppn, geom.planes_per_chip)
    ch, way = divmod(ppn, geom.ways_per_channel)
    return PageAddr(ch, way, plane, block, page)


def ppn_to_vppn(ppn: int, geom: FlashGeometry) -> int:
    ch, way, plane, block, page = decompose_ppn(ppn, geom)
    return ((((block * geom.pages_per_block + page) * geom.planes_per_chip + plane)
             * geom.ways_per_channel + way) * geom.channels + ch)


def vppn_to_ppn(vppn: int, geom: FlashGeometry) -> int:
    _check_page_number(vppn, geom, "VPPN")
    vppn, ch = divmod(vppn, geom.channels)
    vppn, way = divmod(vppn, geom.ways_per_channel)
    vppn, plane = divmod(vppn, geom.planes_per_chip)
    block, page = divmod(vppn, geom.pages_per_block)
    return compose_ppn(PageAddr(ch, way, plane, block, page), geom)


class VppnCodec:
    """Table-free fast path of the two codecs for the simulator's inner loops.

    Skips the range checks of the module-level functions; callers pass
    values they produced themselves.
    """

    __slots__ = ("_c", "_w", "_pl", "_b", "_p")

    def __init__(self, geom: FlashGeometry):
        self._c = geom.channels
        self._w = geom.ways_per_channel
        self._pl = geom.planes_per_chip
        self._b = geom.blocks_per_plane
        self._p = geom.pages_per_block

    def to_ppn(self, vppn: int) -> int:
        vppn, ch = divmod(vppn, self._c)
        vppn, way = divmod(vppn, self._w)
        vppn, plane = divmod(vppn, self._pl)
        block, page = divmod(vppn, self._p)
        return (((ch * self._w + way) * self._pl + plane) * self._b + block) * self._p + page

    def to_vppn(self, ppn: int) -> int:
        ppn, page = divmod(ppn, self._p)
        ppn, block = divmod(ppn, self._b)
        ppn, plane = divmod(ppn, self._pl)
        ch, way = divmod(ppn, self._w)
        return (((block * self._p + page) * self._pl + plane) * self._w + way) * self._c + ch
