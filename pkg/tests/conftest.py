import sys
from pathlib import Path

# Allow importing test-local oracle modules (crc_oracle, lstm_oracle).
sys.path.insert(0, str(Path(__file__).parent))
