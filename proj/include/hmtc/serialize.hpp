#pragma once

#include <string>

#include <json.hpp>

#include "hmtc/config.hpp"
#include "hmtc/mask.hpp"
#include "hmtc/params.hpp"

namespace hmtc {

using json = nlohmann::ordered_json;

// Parameter document layout:
//   {config, layers:[{heads:[{wq,wk,wv}], ffn:{w1,b1,w2,b2}}],
//    final:{v1,v0_slope,v0_bias}}
// Matrices are row-major numeric arrays plus explicit dimensions. Doubles are
// emitted in shortest exact decimal form, so decode(encode(x)) == x bitwise.

json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const json& j);

json network_to_json(const ModelConfig& cfg, const NetworkParams& p);
NetworkParams network_from_json(const json& j, ModelConfig* cfg_out = nullptr);

// Mask bits are packed little-endian into 64-bit words, row-major.
json mask_to_json(const NetworkMask& m);
NetworkMask mask_from_json(const json& j);

std::string write_text_file(const std::string& path, const std::string& content); // returns path
std::string read_text_file(const std::string& path);

} // namespace hmtc
