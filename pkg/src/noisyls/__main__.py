import sys

from noisyls.harness.cli import main

sys.exit(main())
