import sys

from probdr_transformer.cli import main

sys.exit(main())
