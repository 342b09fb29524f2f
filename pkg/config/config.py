import os
import logging
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables from .env file
env_path = Path(__file__).resolve().parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

# Data / Run Directories
DATA_ROOT = os.getenv('CRISISMM_DATA_ROOT', 'data/prepared')
RUNS_DIR = os.getenv('CRISISMM_RUNS_DIR', 'runs')

# Pretrained VGG16 weights converted into the checkpoint container (optional)
PRETRAINED_VGG16 = os.getenv('CRISISMM_PRETRAINED_VGG16')
# Embedding text file ("V 300" header, one token + 300 decimals per line)
EMBEDDINGS_PATH = os.getenv('CRISISMM_EMBEDDINGS')

# Logging Configuration
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FORMAT = os.getenv('LOG_FORMAT', '%(asctime)s - %(name)s - %(levelname)s - %(process)d - %(message)s')
LOG_FILE = os.getenv('LOG_FILE', 'crisis_fusion.log')
LOG_DIR = os.getenv('LOG_DIR', 'logs')

# Processing Configuration
MAX_WORKERS = int(os.getenv('MAX_WORKERS', '4'))
EVAL_BATCH_SIZE = int(os.getenv('EVAL_BATCH_SIZE', '64'))
DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', '1234'))

# Curation
SPLIT_RATIOS = tuple(float(r) for r in os.getenv('SPLIT_RATIOS', '0.70,0.15,0.15').split(','))

# Gradient check harness
GRADCHECK_TOLERANCE = float(os.getenv('GRADCHECK_TOLERANCE', '1e-4'))
GRADCHECK_MAX_COORDS = int(os.getenv('GRADCHECK_MAX_COORDS', '12'))


def print_config():
    """Print configuration settings for debugging"""
    config_dict = {
        'DATA_ROOT (CRISISMM_DATA_ROOT)': DATA_ROOT,
        'RUNS_DIR (CRISISMM_RUNS_DIR)': RUNS_DIR,
        'PRETRAINED_VGG16 (CRISISMM_PRETRAINED_VGG16)': PRETRAINED_VGG16,
        'EMBEDDINGS_PATH (CRISISMM_EMBEDDINGS)': EMBEDDINGS_PATH,
        'LOG_LEVEL': LOG_LEVEL,
        'LOG_DIR': LOG_DIR,
        'MAX_WORKERS': MAX_WORKERS,
        'EVAL_BATCH_SIZE': EVAL_BATCH_SIZE,
        'DEFAULT_SEED': DEFAULT_SEED,
        'SPLIT_RATIOS': SPLIT_RATIOS,
        'GRADCHECK_TOLERANCE': GRADCHECK_TOLERANCE,
        'GRADCHECK_MAX_COORDS': GRADCHECK_MAX_COORDS,
    }

    print("\n=== Configuration Settings ===")
    for key, value in config_dict.items():
        print(f"{key}: {value}")
    print("============================\n")
