"""
Timing and energy of one TDD transmission round.

A round from state i sends N_i coded packets back to back, then waits T_w for
the ACK: T^i = N_i·T_p + T_w. Energy charges transmit power over the packets
and receive power over the waiting window.
"""

try:
    from rlnc_tdd.errors import PreconditionError
    from rlnc_tdd.models import LinkParams, TimingDerived
except ImportError:
    from errors import PreconditionError
    from models import LinkParams, TimingDerived


def _check_batch(batch_size: int) -> None:
    if batch_size < 1:
        raise PreconditionError(f"batch size must be at least 1, got {batch_size}")


def _check_round(batch_size: int, state: int, n_packets: int) -> None:
    _check_batch(batch_size)
    if not 1 <= state <= batch_size:
        raise PreconditionError(f"state must lie in [1, {batch_size}], got {state}")
    if n_packets < 1:
        raise PreconditionError(f"N_i must be at least 1, got {n_packets}")


def packet_duration(params: LinkParams, batch_size: int) -> float:
    """Air time of one coded packet carrying ``batch_size`` coefficients: (h + n + g·M)/R."""
    _check_batch(batch_size)
    bits = params.header_bits + params.payload_bits + params.coeff_bits * batch_size
    return bits / params.rate_bps


def wait_time(params: LinkParams) -> float:
    """Waiting window T_w: round-trip propagation plus the ACK air time, unless overridden."""
    if params.t_wait_s is not None:
        return params.t_wait_s
    return 2.0 * params.prop_delay_s + params.ack_bits / params.rate_bps


def derive_timing(params: LinkParams, batch_size: int) -> TimingDerived:
    return TimingDerived(
        batch_size=batch_size,
        t_packet_s=packet_duration(params, batch_size),
        t_wait_s=wait_time(params),
    )


def round_duration(params: LinkParams, batch_size: int, state: int, n_packets: int) -> float:
    """T^i = N_i·T_p(M) + T_w.

    Raises:
        PreconditionError: if ``state`` is outside 1..M or ``n_packets`` < 1
    """
    _check_round(batch_size, state, n_packets)
    return n_packets * packet_duration(params, batch_size) + wait_time(params)


def round_energy(params: LinkParams, batch_size: int, state: int, n_packets: int) -> float:
    """E^i = tx_power·N_i·T_p(M) + rx_power·T_w."""
    _check_round(batch_size, state, n_packets)
    return (params.tx_power * n_packets * packet_duration(params, batch_size)
            + params.rx_power * wait_time(params))
