"""DRIQN command line: run with `python -m driqn`."""
from .main import main

if __name__ == "__main__":
    main()
