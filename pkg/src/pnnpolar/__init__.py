"""Polar-code toolkit with a partitioned neural-network decoder."""

from .polar import CodeSpec, construct_frozen_set, encode, polar_transform
from .channel import ebn0_to_sigma, modulate_bpsk, to_llr
from .bp import bp_decode
from .classic import MapDecoder, map_decode, sc_decode, scl_decode
from .nn import MlpModel, TrainConfig, default_layout, train_subblock
from .pnn import PartitionPlan, equal_plan, plan_partitions, pnn_decoder, pscl_decoder
from .harness import BerRecord, SweepConfig, ber_sweep, latency_syncs, normalized_error

__version__ = "0.1.0"
