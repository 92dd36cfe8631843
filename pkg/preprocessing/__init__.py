from preprocessing.tokenization import CLS, PAD, SEP, UNK, EncodedExample, Vocab, tokenize
from preprocessing.batching import EncodedSample, EncodedSplit, encode_split, iterate_batches
