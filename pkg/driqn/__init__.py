# driqn: distributionally robust implicit quantile networks for USV navigation
__version__ = "0.1.0"

from .config import AgentKind, RunConfig, Strategy, load_config
from .types import DriqnError, Observation, Outcome
