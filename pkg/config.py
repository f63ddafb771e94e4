import os

BASE_DIR = os.path.abspath(os.path.dirname(__file__))
SQLALCHEMY_DATABASE_URI = 'sqlite:///' + os.path.join(BASE_DIR, 'sfgsim_runs.db')

SECRET_KEY = os.environ.get('SFGSIM_SECRET_KEY', 'dev-only-change-me')
RESULTS_FOLDER = os.path.join(BASE_DIR, 'results')
LOG_LEVEL = os.environ.get('SFGSIM_LOG_LEVEL', 'INFO')

# Simulator defaults used by the CLI and the API
DEFAULT_SEED = 0
GAUSSIAN_TERMS = 6
EXCITATION_ENERGY_MEV = 600.0
DETECTION_THRESHOLD_MEV = 1.0
RESOLUTION_FACTOR = 1.5
CLEAN_GATE_THRESHOLD_BITS = 1e-6
PATCH_WORKERS = 1
