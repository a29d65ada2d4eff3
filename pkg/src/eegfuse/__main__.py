# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


import sys

from .cli import main

sys.exit(main())
