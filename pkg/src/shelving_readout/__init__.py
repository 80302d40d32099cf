"""Multilevel transmon dispersive-readout simulator and analysis toolkit.

Simulates shelved readout of a four-level transmon ladder: cascaded decay
dynamics, qubit-state-dependent resonator response, stochastic IQ shot
generation for one or two multiplexed tones, state discrimination
(threshold, Gaussian blobs, truth table, feedforward network), and the
fidelity/SNR/SPAM analysis layer on top.
"""

from .levels import (
    DecayRates,
    DegenerateRatesError,
    JumpTrajectory,
    Level,
    LevelPopulation,
    PREPARATION_PULSES,
    SHELVING_PULSES,
    ground_population_curve,
    populations_analytic,
    populations_numeric,
    sample_level_occupancy,
    sample_trajectory,
    shelve,
    shelve_map,
)
from .readout import (
    IQShot,
    NoiseModel,
    ResonatorModel,
    ToneConfig,
    critical_photon_check,
    iq_center,
    preselect,
    read_shots_csv,
    s21_response,
    select_multistate_frequency,
    select_tone_frequencies,
    simulate_shot,
    simulate_shots,
    write_shots_csv,
)
from .discriminate import (
    FnnModel,
    GaussianBlob,
    PrimaryLabel,
    ProjectionAxis,
    SecondaryLabel,
    StateLabel,
    TrainConfig,
    classify_secondary,
    classify_two_state,
    fit_blob,
    fit_projection,
    fnn_classify,
    fnn_train,
    load_fnn,
    save_fnn,
    secondary_result_map,
    training_data_from_shots,
    truth_table_combine,
)
from .metrics import (
    AssignmentMatrix,
    DecayFit,
    FidelityReport,
    assignment_matrix,
    fidelity_n_state,
    fidelity_two_state,
    fit_decay_curves,
    ideal_fidelity,
    project_to_simplex,
    snr,
    snr_for_ideal_fidelity,
    spam_mitigate,
)

__version__ = "0.1.0"
