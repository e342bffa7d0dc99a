"""
Shared constants for the FPGA Debug Overlay Toolkit.

Holds the default settings tree mirrored by overlay_debug_settings.json, the
command-line exit statuses and the artifact file names of a project
directory.
"""

EXIT_SUCCESS = 0
EXIT_PARTIAL = 1
EXIT_VALIDATION = 2
EXIT_FAILURE = 3

ARCH_FILE = "arch.json"
NETLIST_FILE = "netlist.blif"
TRIGGER_FILE = "trigger.blif"
PLACEMENT_FILE = "placement.json"
ROUTING_FILE = "routing.json"
MINW_FILE = "minw.json"
OVERLAY_FILE = "overlay.json"
OVERLAY_REPORT_FILE = "overlay_report.json"
TRIGGER_FABRIC_FILE = "trigger_fabric.json"
DEBUG_CONFIG_FILE = "debug_config.json"
TRIGGER_CONFIG_FILE = "trigger_config.json"
STATS_FILE = "stats.json"
PROJECT_STATE_FILE = "project_state.json"

# Artifacts the debug-time commands must never rewrite
LOCKED_ARTIFACTS = (PLACEMENT_FILE, ROUTING_FILE)

ORDER_TRACE_FIRST = "trace-first"
ORDER_TRIGGER_FIRST = "trigger-first"
OVERLAY_ORDERS = [ORDER_TRACE_FIRST, ORDER_TRIGGER_FIRST]

DEFAULT_ARCH = {
    'grid_width': 6,
    'grid_height': 6,
    'lut_size_k': 4,
    'bles_per_clb': 4,
    'clb_inputs': 10,
    'channel_width_w': 12,
    'fc_in': 0.5,
    'fc_out': 1.0,
    'tb_column_period': 4,
    'tb_inputs_per_block': 4,
    'tb_fc': 0.5,
    'io_capacity': 2,
}

DEFAULT_SETTINGS = {
    'log_level': 'INFO',

    'arch': dict(DEFAULT_ARCH),

    'placer': {
        'inner_num': 1.0,
        'init_temp_factor': 20.0,
        'target_acceptance': 0.44,
        'exit_factor': 0.005,
        'max_temperatures': 400,
    },

    'router': {
        'max_iters': 50,
        'pres_fac_init': 0.5,
        'pres_fac_mult': 1.3,
        'hist_fac': 1.0,
        'astar_fac': 1.0,
        'stall_limit': 10,
        'w_hi': 64,
    },

    'trace_overlay': {
        'fanout_target': 2,
        'width_margin': 0.3,
        'max_iters': 30,
        'share_cost': 0.05,
        'prune_patience': 0,
        'salvage': True,
        'pres_fac_init': 0.5,
        'pres_fac_mult': 1.3,
        'hist_fac': 1.0,
    },

    'trigger_overlay': {
        'link_budget': 4,
        'gamma_indirect': 5.0,
        'gamma_blocked': 10000.0,
        'cooling_rate': 0.95,
        'moves_per_le': 100,
        'init_temp_factor': 20.0,
        'max_route_through': 2,
        'stall_temperatures': 10,
        'max_temperatures': 500,
        'exit_temperature': 0.01,
        'target_acceptance': 0.44,
        'restarts': 1,
        'order': ORDER_TRACE_FIRST,
    },

    'suite': {
        'lut_counts': [50, 80, 110, 150, 190, 230, 270, 310, 350, 400],
        'rent_p': 0.65,
        'first_seed': 1,
        'utilization': 0.8,
        'fanout_target': 1,
        'observability_sizes': [4, 8, 16, 32],
        'observability_samples': 50,
        'trigger_les': [4, 6, 8, 10, 12, 16, 20, 24, 28, 32],
        'requested_sets': 50,
        'matching_instances': 200,
        'sa_fixture_runs': 100,
    },

    'acceptance': {
        'mean_fraction_connected': 0.95,
        'min_fraction_connected': 0.90,
        'max_seconds_per_circuit': 60.0,
        'max_overlay_time_ratio': 1.0,
        'max_matching_seconds': 10.0,
        'config_pass_rate': 1.0,
        'min_median_trigger_speedup': 10.0,
        'min_sa_optimal_runs': 95,
    },

    'artifacts': {
        'include_timing': False,
    },
}
