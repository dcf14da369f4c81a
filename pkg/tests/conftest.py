import logging
import logging.handlers

import pytest

from tests import log_queue, queue_handler
from zkcollide.config import resolve_config
from zkcollide.experiments import Lab
from zkcollide.ground_state import ground_state_constants, solve_ground_state
from zkcollide.interaction import CoefficientKernel, build_interaction_table
from zkcollide.z_dynamics import ZModel

logger = logging.getLogger(__name__)


@pytest.fixture(autouse=True, scope="session")
def _setup_logging(pytestconfig):
    """Set up logging for the entire test session.

    Records emitted in worker processes (fan_out, SafeProcess) are routed through a queue
    so they reach both the report and caplog handlers.

    See:
    - https://stackoverflow.com/a/36807327/1342874
    - https://github.com/pytest-dev/pytest/issues/3037

    """
    logging_plugin = pytestconfig.pluginmanager.getplugin("logging-plugin")

    original_handlers = logging.root.handlers.copy()
    logging.root.handlers.clear()

    _listener = logging.handlers.QueueListener(
        log_queue,
        logging_plugin.report_handler,
        logging_plugin.caplog_handler,
        respect_handler_level=True,
    )

    _listener.start()
    logging.root.addHandler(queue_handler)
    yield
    _listener.stop()
    queue_handler.close()

    logging.root.handlers = original_handlers


@pytest.fixture(scope="session")
def profile():
    return solve_ground_state()


@pytest.fixture(scope="session")
def constants(profile):
    return ground_state_constants(profile)


@pytest.fixture(scope="session")
def table(profile, constants):
    return build_interaction_table(profile, z_min=2.0, z_max=30.0, step=0.5, c_int=constants.c_int)


@pytest.fixture(scope="session")
def model(table, constants, profile):
    return ZModel(table, constants, profile)


@pytest.fixture(scope="session")
def kernel(profile, constants):
    return CoefficientKernel(profile, constants)


@pytest.fixture
def lab(tmp_path, profile, constants):
    """A Lab writing under tmp_path, with the session profile and constants already in place."""
    cfg = resolve_config(overrides={"output_dir": tmp_path / "out", "cache_dir": tmp_path / "cache"})
    lab = Lab(cfg)
    lab.__dict__["profile"] = profile
    lab.__dict__["constants"] = constants
    return lab
