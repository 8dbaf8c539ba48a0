//! Quantization, Laplace-driven range coding and the `.nvv` container.

mod bitstream;
mod freq;
mod quant;
mod range;
mod sequence;

pub use bitstream::{
    read_frame, read_header, read_stream, write_frame, write_header, write_stream, ByteBreakdown, FrameKind,
    FrameRecord, LevelShape, Reader, Stream, StreamHeader, TensorKind, TensorRecord, FORMAT_VERSION,
    FRAME_META_BYTES, MAGIC, TENSOR_META_BYTES,
};
pub use freq::{build_freq_table, FreqTable, FREQ_BITS, FREQ_TOTAL};
pub use quant::{dequantize, quantize, QuantizedGrid, QUANT_LIMIT};
pub use range::{range_decode, range_encode, RangeDecoder, RangeEncoder};
pub use sequence::{
    decode_grid, decode_sequence, encode_grid, record_table, DecodedFrame, DecodedFrameBuffer, SequenceDecoder,
};
