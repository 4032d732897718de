"""Logical Bell pair preparation between surface-code nodes.

Stabilizer simulation, circuit construction for entanglement boosting and
distributed lattice surgery, a complementary-gap decoder, distillation
synthesis and space-time cost models.
"""

from .builders import build_boosting_circuit, build_surgery_circuit, surgery_bell_pair_count
from .circuit import Circuit, CircuitParseError, NoiseModel, parse, serialize, validate_detectors
from .codes import (
    CssCodeSpec,
    SurfaceCodeLayout,
    build_parity_code,
    build_rotated_surface_code,
    build_steane_code,
    standard_form,
    verify_code,
)
from .cost import (
    compare_protocols,
    fit_boosting_scaling,
    fit_surgery_scaling,
    llv_boosting,
    llv_surgery,
    pipelined_volume,
)
from .decoder import (
    GapRecord,
    build_matching_graphs,
    complementary_gap,
    decode_batch,
    decode_mwpm,
    postselect,
)
from .distill import analyze_parity_distillation, schedule_pipeline, synthesize_distillation
from .experiment import DecoderContext, run_experiment
from .frames import ShotBatch, build_symptom_table, extract_error_model, sample_shots
from .pauli import PauliString, commutes_with, pauli_product
from .tableau import StabilizerTableau, apply_clifford, measure_stabilizer

__version__ = "0.1.0"
