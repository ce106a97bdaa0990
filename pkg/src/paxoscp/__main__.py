import sys
from paxoscp.cli import main

sys.exit(main())
