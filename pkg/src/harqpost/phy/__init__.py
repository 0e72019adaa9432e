"""Coded 64-QAM physical layer and HARQ session simulation."""

from .ldpc import DEFAULT_CODE, LdpcCode, build_peg_code, ldpc_decode, ldpc_encode, load_code, read_alist, write_alist
from .modem import QAM64, ModemConfig, chase_llr, gray_qam, modulate
from .session import ConfigurationError, SessionTrace, TransportBlock, run_session, transport_block

__all__ = [
    "DEFAULT_CODE", "LdpcCode", "build_peg_code", "ldpc_decode", "ldpc_encode", "load_code", "read_alist", "write_alist",
    "QAM64", "ModemConfig", "chase_llr", "gray_qam", "modulate",
    "ConfigurationError", "SessionTrace", "TransportBlock", "run_session", "transport_block",
]
