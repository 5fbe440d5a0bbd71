"""spinforge: coherent control of coupled spin-1/2 systems.

Modules
-------
spinsys   spin systems, product operators, drift Hamiltonians
prop      exact and approximate propagators, pulse programs
fid       gate and state fidelity measures
grape     gradient-ascent pulse engineering
compulse  composite 180 pulses and error grids
ddsim     dynamical decoupling sequences
refocus   Walsh-function refocusing compiler
pps       pseudo-pure state preparation
fileio    text formats (spin systems, pulse shapes, matrices, programs)
cli       the `spinforge` command-line driver
"""

__version__ = "0.1.0"

from .spinsys import (  # noqa: F401
    SpinSystem,
    Spin,
    single_spin_ops,
    total_ops,
    drift_hamiltonian,
    subsystem,
    passive_ensemble,
    coherence_orders,
)
from .prop import (  # noqa: F401
    PulseProgram,
    ChannelControls,
    EnsembleMember,
    EnsembleSpec,
    expm_step,
    step_hamiltonian,
    sequence_propagator,
    grawme_step,
    evolve_state,
)
from .fid import (  # noqa: F401
    unitary_fidelity,
    unitary_infidelity,
    phi4,
    state_fidelity,
    uj_fidelity,
    cardinal_average_fidelity,
    ensemble_fidelity,
)
from .compulse import (  # noqa: F401
    catalog,
    composite_propagator,
    pulse_propagator,
    error_map,
    z_rotation_pair,
)
from .ddsim import (  # noqa: F401
    DDSequence,
    udd_times,
    build_sequence,
    memory_fidelity,
    accumulated_phase,
)
from .simplex import (  # noqa: F401
    LPError,
    LPInfeasibleError,
    LPUnboundedError,
    solve_lp,
)
from .refocus import (  # noqa: F401
    RefocusError,
    WalshPattern,
    walsh,
    walsh_product,
    assign_patterns,
    RefocusSchedule,
    lp_schedule,
    Delay,
    Pulse180,
    compile_program,
    target_propagator,
    verify_schedule,
)
from .pps import (  # noqa: F401
    DensityState,
    crush,
    zero_quantum_amplitude,
    embed_deviation,
    pps_two_spin_homonuclear,
    pps_two_spin_heteronuclear,
    pps_crotonic_chain,
    temporal_cycle_states,
    temporal_average,
    pseudo_purity,
)
from .grape import (  # noqa: F401
    GrapeError,
    GrapeProblem,
    GrapeResult,
    OptimizerOptions,
    forward_backward,
    grad_approx,
    grad_exact,
    grad_phase_only,
    optimize,
    subsystem_objective,
    subsystem_problem,
)
from .fileio import (  # noqa: F401
    FileFormatError,
    load_spin_system,
    save_spin_system,
    load_pulse_program,
    save_pulse_program,
    load_matrix,
    save_matrix,
    load_refocus_program,
    save_refocus_program,
    save_csv,
)
from .cli import named_gate  # noqa: F401
