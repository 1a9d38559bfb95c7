from .config import ScenarioConfig, load_config
__version__ = "0.1.0"
