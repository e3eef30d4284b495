"""Entry point for python -m perftensor."""

from .cli import main


if __name__ == "__main__":
    main()
