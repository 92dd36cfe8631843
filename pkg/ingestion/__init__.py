from ingestion.schema import Dataset, DatasetError, Example, TaskInfo
from ingestion.tsv_loader import TsvSchema, load_tsv, write_tsv
from ingestion.synthetic_task import EASY, HARD, SyntheticTaskSpec, make_synthetic_task
