#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "actmark/nn.hpp"
#include "actmark/wm_black.hpp"
#include "actmark/wm_white.hpp"

namespace actmark::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Container files: a text header line, a one-line JSON manifest (section
// table with per-section CRCs), then raw little-endian array payloads.
// Round trips are bitwise lossless. See docs/file-format.md.

void save_model(const std::string& path, const nn::MlpModel& model);
nn::MlpModel load_model(const std::string& path);

void save_secret(const std::string& path, const whitebox::WhiteboxSecret& secret);
whitebox::WhiteboxSecret load_secret(const std::string& path);

void save_centers(const std::string& path, const whitebox::GaussianCenters& centers);
whitebox::GaussianCenters load_centers(const std::string& path);

void save_keyset(const std::string& path, const blackbox::BlackboxKeySet& keyset);
blackbox::BlackboxKeySet load_keyset(const std::string& path);

// Minimal CSV (no quoting; fields must not contain commas or newlines).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace actmark::io
