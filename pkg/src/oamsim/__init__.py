"""OAM modes through Kolmogorov turbulence, analysed with fluctuation relations."""

from oamsim.optics import ComplexField, GridSpec, ModeIndex, lg_mode, make_grid, overlap
from oamsim.turbulence import PhaseScreen, fried_from_strength, kolmogorov_screen, structure_function
from oamsim.channel import (
    ChannelConfig,
    CountsMatrix,
    TransitionMatrix,
    apply_screen,
    backward_from_counts,
    estimate_transition,
    forward_from_counts,
    fresnel_propagate,
    single_mask_amplitudes,
)
from oamsim.thermo import (
    GibbsPopulations,
    ThermoReport,
    WorkDistribution,
    delta_nonunital,
    generalized_jarzynski_check,
    gibbs,
    jarzynski_average,
    second_law_report,
    work_distribution,
    work_value,
)
from oamsim.stats import ConfidenceBand, NoiseModel, confidence_band, resample, synth_counts

__version__ = "0.1.0"
