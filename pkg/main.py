"""
Main entry point for the OTA-DSGD simulator.
"""

import sys
from src.logger import logger
from src.main import main as run_cli


def main():
    print(">>> Starting OTA-DSGD simulator...")
    sys.stdout.flush()

    try:
        code = run_cli()
    except KeyboardInterrupt:
        logger.info("Simulation stopped by user.")
        code = 130
    except Exception as e:
        logger.error(f"Fatal error: {str(e)}", exc_info=True)
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    main()
