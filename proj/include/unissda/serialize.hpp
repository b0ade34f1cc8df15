#pragma once

#include "unissda/model.hpp"
#include "unissda/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace unissda::serialize {

using unissda::FeatureDataset;
using unissda::Matrix;
using unissda::Vector;

// FNV-1a 64-bit digests, used for manifest fingerprints.
std::uint64_t fnv1a64_bytes(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);
std::string digest_hex(std::uint64_t digest);

// JSONL dataset format: a header line carrying domain and the full label set,
// then one record per sample (feature array, class id, domain, labeled flag,
// split). Doubles are emitted with round-trip precision, so read-back is
// lossless.
void write_dataset_jsonl(const FeatureDataset& ds, const std::string& path);
FeatureDataset read_dataset_jsonl(const std::string& path);

// Compact binary format (native little-endian): u64 N, u64 d, u8 domain,
// N*d float64 row-major features, then metadata arrays (i32 class ids,
// u8 labeled flags, u8 splits) and the label set (u64 count + i32 ids).
void write_dataset_binary(const FeatureDataset& ds, const std::string& path);
FeatureDataset read_dataset_binary(const std::string& path);

// Matrix block: u64 rows, u64 cols, row-major float64 payload. Vectors are
// stored as single-column blocks.
void write_matrix_block(std::ostream& out, const Matrix& m);
Matrix read_matrix_block(std::istream& in);

void write_checkpoint_binary(const model::Model& m, const std::string& path);
model::Model read_checkpoint_binary(const std::string& path);

void write_checkpoint_jsonl(const model::Model& m, const std::string& path);
model::Model read_checkpoint_jsonl(const std::string& path);

}  // namespace unissda::serialize
