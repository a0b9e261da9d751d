"""Anonymity-quantified ABAC: entropy-scored credentials, weight-ordered
policy path trees, and a replay benchmark harness."""

from .anonymity import (
    AnonymityScore,
    RTResult,
    SubjectSpace,
    build_subject_space,
    request_entropy,
    rt_anonymity,
    subject_anonymity,
    subject_space,
)
from .credential_crypto import (
    KeyPair,
    SignedCredential,
    canonical_encode,
    keygen,
    sign_credential,
    verify_credential,
)
from .ewpt import (
    EWPT,
    Decision,
    Engine,
    EngineConfig,
    build_tree,
    linear_scan,
    match_strict,
    match_subset,
    maybe_rebuild,
    sort_request_attributes,
)
from .model import (
    AccessRequest,
    AttributeDef,
    AttributeSpace,
    AVPair,
    History,
    HistoryRecord,
    PolicyRule,
    Registry,
    load_attribute_space,
)
from .optimizer import (
    AAHPool,
    DecisionRecord,
    WeightEntry,
    WeightList,
    attribute_anonymity,
    compute_weights,
    decision_entropy,
    information_gain,
)
from .workload import CaseSpec, FACTOR_GROUPS, Workload, case_spec, generate

__version__ = "0.1.0"
