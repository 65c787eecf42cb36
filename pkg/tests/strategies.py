"""Hypothesis strategies for wire-format records."""

from hypothesis import strategies as st

from soilnet.records import (
    SampleRecord,
    StatusRecord,
    TimeReferenceRecord,
    TunneledRecord,
    encode_record,
)

mote_ids = st.integers(0, 0xFFFF)
cookies = st.integers(0, 0xFFFF_FFFF)
local_times = st.integers(0, 0xFFFF_FFFF)


@st.composite
def sample_records(draw):
    return SampleRecord(
        origin_mote=draw(mote_ids),
        multiplexer_id=draw(st.integers(0, 0xFFFF_FFFF)),
        channel=draw(st.integers(0, 7)),
        raw_adc=draw(st.integers(0, 4095)),
        local_time=draw(local_times),
        sequence=draw(st.integers(0, 0xFFFF_FFFF)),
        cookie=draw(cookies),
    )


@st.composite
def status_records(draw):
    return StatusRecord(
        origin_mote=draw(mote_ids),
        battery_millivolts=draw(st.integers(0, 4200)),
        enclosure_humidity_pct=draw(st.integers(0, 100)),
        internal_temp_centi_c=draw(st.integers(-32768, 32767)),
        local_time=draw(local_times),
        cookie=draw(cookies),
    )


@st.composite
def time_reference_records(draw):
    has_global = draw(st.booleans())
    has_neighbor = draw(st.booleans()) or not has_global
    return TimeReferenceRecord(
        origin_mote=draw(mote_ids),
        local_time=draw(local_times),
        local_sub_ticks=draw(st.integers(0, 32767)),
        global_time=draw(local_times) if has_global else None,
        neighbor_id=draw(mote_ids) if has_neighbor else None,
        neighbor_local_time=draw(local_times) if has_neighbor else None,
        neighbor_sub_ticks=draw(st.integers(0, 32767)) if has_neighbor else 0,
        cookie=draw(cookies),
    )


plain_records = st.one_of(sample_records(), status_records(), time_reference_records())


@st.composite
def tunneled_records(draw):
    inner = draw(plain_records)
    return TunneledRecord(
        origin_mote=draw(mote_ids),
        received_at_local_time=draw(local_times),
        inner=encode_record(inner),
        cookie=draw(cookies),
    )


log_records = st.one_of(plain_records, tunneled_records())
