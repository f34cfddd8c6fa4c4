CONFIGURATION = {
    'schema_version': 1,
    'kind': 'fig3',
    'noncentrality': 3.0,
    'noncentrality_grid': [float(s) for s in range(0, 41)],
    'operating_points': [
        {'prior_h1': 0.3, 'harvest_prob': 0.2},
        {'prior_h1': 0.3, 'harvest_prob': 0.5},
        {'prior_h1': 0.7, 'harvest_prob': 0.5},
        {'prior_h1': 0.7, 'harvest_prob': 0.9},
    ],
    'capacity': None,
    'num_sensors': 4,
    'theta': None,
    'mode': 'energy_adapted',
    'sim': {
        'horizon': 1_000_000,
        'warmup': 100_000,
        'replicas': 1,
        'initial_battery': 0,
    },
    'output': None,
}
