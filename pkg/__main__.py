"""The main execution script for this package for testing."""
from ahm_ood._app.cli import main


# execute the main entry point of the CLI
main()
