"""WDM multi-span fiber link: transmitter, Manakov SSFM and genie receiver."""
from .config import LinkConfig, WdmConfig, profile, PROFILES, BER_THRESHOLD
from .link import (TxRecord, ChannelRecord, Propagated, StepCountError, Waveplates,
                   wdm_transmit, ssfm_propagate, draw_waveplates, jones_response,
                   dgd_from_jones, raised_cosine)
from .receiver import RxResult, receive_center_channel, required_snr_for_ber, ber_awgn
from .sweep import SweepPoint, power_sweep, distance_sweep, optima, write_csv

__all__ = [
    "LinkConfig", "WdmConfig", "profile", "PROFILES", "BER_THRESHOLD",
    "TxRecord", "ChannelRecord", "Propagated", "StepCountError", "Waveplates",
    "wdm_transmit", "ssfm_propagate", "draw_waveplates", "jones_response", "dgd_from_jones",
    "raised_cosine", "RxResult", "receive_center_channel", "required_snr_for_ber", "ber_awgn",
    "SweepPoint", "power_sweep", "distance_sweep", "optima", "write_csv",
]
