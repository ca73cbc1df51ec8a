import sys

from varsmooth.runner import main

sys.exit(main())
