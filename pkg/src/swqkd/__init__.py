"""swqkd: shortwave/C-band QKD and classical LAN-WDM co-existence simulator."""

__version__ = "0.1.0"

from .analytic import RatePrediction, mc_agreement, predict, threshold_ob
from .detection import (DetectorSpec, INGAAS_SPAD, ReceiverSpec, SI_SPAD,
                        apply_dead_time, few_mode_modulation, transmit)
from .optics import (ChannelPlan, FiberSpec, FilterElement, NoiseBudget,
                     ase_noise_rate, calibrate_raman, cascade_transmission,
                     export_spectrum, raman_noise_rate)
from .postproc import (ProcessorConfig, SiftResult, SyncResult, secret_fraction,
                       sift, synchronize, temporal_gate)
from .scenarios import (CalibratedParams, Layout, ScenarioConfig,
                        build_scenario, load_scenario)
from .source import (PolarizationState, SourceConfig, SymbolFrame, SymbolStream,
                     emit_photons, generate_frames, optical_budget_to_attenuation)
