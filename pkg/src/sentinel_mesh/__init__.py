"""sentinel-mesh: secure data collection protocols over simulated sensor meshes.

The library layers cleanly: ``radio`` turns positions into a directed
connectivity graph, ``addressing`` assigns conflict-free addresses and
matches interests to data, ``pbox`` supplies the permutation/compression
primitives behind key codes, ``keygraph`` manages group keys with verifiable
forward/backward secrecy, ``exchange`` runs the sink-mediated key lifecycle
and masked aggregation, and ``sim`` binds it all into a deterministic
scenario harness with a CLI (``sentinel-mesh``).
"""

from .addressing import (
    AddressTable,
    Attribute,
    AttributeSet,
    address_frequency_histogram,
    assign_address,
    conflict_neighborhood,
    eval_operator,
    match,
)
from .errors import (
    ConfigError,
    DemodulationError,
    DomainError,
    ProtocolOrderError,
    SentinelMeshError,
    UnreachableError,
)
from .exchange import (
    AuthMode,
    AuthOutcome,
    AuthParams,
    AuthTranscript,
    EncryptedReading,
    KeySchedule,
    NodeState,
    PhParams,
    SensorIdentity,
    SinkState,
    aggregate,
    auth_code,
    decrypt_reading,
    deploy,
    encrypt_reading,
    impersonate,
    mutual_authenticate,
    nonce_free_code,
    provision,
    rotate_keys,
    sink_decrypt_sum,
    verify_pair,
)
from .keygraph import (
    Key,
    KeyGraph,
    MemberView,
    RekeyMessage,
    build_explicit,
    build_group,
    derive_label,
    format_rekey_message,
    join,
    keyset,
    leave,
    member_closure,
    parse_rekey_line,
    userset,
)
from .pbox import (
    CompressionPBox,
    StraightPBox,
    apply_compression,
    apply_straight,
    derive_key_code,
    enumerate_straight,
)
from .radio import (
    NodePosition,
    OokWaveform,
    RadioParams,
    Topology,
    build_topology,
    friis_received_power,
    log_distance_received_power,
    mw_to_dbm,
    ook_demodulate,
    ook_modulate,
)
from .scenario import Scenario, ScenarioEvent, load_scenario, parse_scenario, validate
from .sim import RunReport, route, run, run_file

__version__ = "0.1.0"
