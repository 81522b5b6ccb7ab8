"""Resource sharing: optimise the largest consumer and largest producer as one prosumer.

The pair's loads are added before optimisation and the merged dispatch is
split back onto the two buses afterwards for the power flow.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .demand import BuildingRecord
from .errors import SharingError
from .optimize import DispatchSeries


@dataclass(frozen=True)
class FusionRecord:
    consumer_id: str
    producer_id: str
    consumer_bus: str
    producer_bus: str
    consumer_load: np.ndarray
    producer_load: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.consumer_id == self.producer_id

    @property
    def merged_id(self) -> str:
        return self.producer_id if self.degenerate else f"{self.producer_id}+{self.consumer_id}"


def pick_pair(buildings: Sequence[BuildingRecord]) -> tuple[BuildingRecord, BuildingRecord]:
    """(largest consumer by annual energy, largest producer by roof PV bound); ties by id."""
    consumer = max(buildings, key=lambda b: (b.annual_energy_kwh, _neg_id(b.id)))
    producer = max(buildings, key=lambda b: (b.pv_bound_kw, _neg_id(b.id)))
    return consumer, producer


def _neg_id(s: str):
    # max() with ties resolved to the smallest id
    return tuple(-ord(ch) for ch in s)


def merge_for_sharing(buildings: Sequence[BuildingRecord]) -> tuple[list[BuildingRecord], FusionRecord]:
    """Replace the consumer/producer pair by one record carrying both loads and the producer's roof."""
    if len(buildings) < 2:
        raise SharingError("resource sharing needs at least two buildings")
    if any(b.load is None for b in buildings):
        raise SharingError("all buildings need load profiles before merging")
    consumer, producer = pick_pair(buildings)
    record = FusionRecord(
        consumer.id, producer.id, consumer.bus, producer.bus,
        np.asarray(consumer.load, dtype=float), np.asarray(producer.load, dtype=float),
    )
    if record.degenerate:
        return list(buildings), record
    merged = replace(
        producer,
        id=record.merged_id,
        load=record.producer_load + record.consumer_load,
        annual_kwh=None,
    )
    out = []
    for b in buildings:
        if b.id == producer.id:
            out.append(merged)
        elif b.id != consumer.id:
            out.append(b)
    return out, record


def split_after_sharing(dispatch: DispatchSeries, record: FusionRecord) -> dict[str, np.ndarray]:
    """Net injection (kW, export positive) at the consumer and producer buses.

    On-site supply (PV direct use and battery discharge) covers the producer's
    own load first and the consumer's with what is left; the consumer's
    residual is its import and everything else sits at the producer's bus.
    The two series add up bit-for-bit to the merged ``exp - imp``.
    """
    net = dispatch.exp - dispatch.imp
    if record.degenerate:
        return {record.producer_id: net.copy()}
    if np.any((dispatch.imp > 0) & (dispatch.exp > 0)):
        raise SharingError("merged dispatch imports and exports in the same step")
    onsite = dispatch.load - dispatch.imp
    to_producer = np.minimum(onsite, record.producer_load)
    consumer_import = np.clip(record.consumer_load - (onsite - to_producer), 0.0, dispatch.imp)
    # |consumer_import| <= |net| whenever it is nonzero, so producer - net is
    # exact (Fast2Sum) and the consumer share below reproduces net exactly
    producer = net + consumer_import
    consumer = net - producer
    return {record.consumer_id: consumer, record.producer_id: producer}
