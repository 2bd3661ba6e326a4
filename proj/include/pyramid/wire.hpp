#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pyramid/errors.hpp"
#include "pyramid/types.hpp"

namespace pyramid {

/// Cross-instance frames. Layout (little endian, after the u32 length
/// prefix added by the transport):
///   header: frame type (1 byte), epoch (8), query_id (8)
///   QueryRequest body:  k (4), search_l (4), dim (4), vector (dim x f32),
///                       reply_to (u32 length + UTF-8 bytes)
///   PartialResult body: shard_id (4), count (4), count x (item id (8), score (f64))
///   Control body: UTF-8 JSON (broker / registry / admin RPC)
enum class FrameType : std::uint8_t {
    QueryRequest = 1,
    PartialResult = 2,
    Control = 3,
};

struct QueryRequestMsg {
    std::uint64_t epoch = 0;
    std::uint64_t query_id = 0;
    std::uint32_t k = 0;
    std::uint32_t search_l = 0;
    std::vector<float> vector;
    std::string reply_to;
};

struct PartialResultMsg {
    std::uint64_t epoch = 0;
    std::uint64_t query_id = 0;
    std::uint32_t shard_id = 0;
    std::vector<SearchHit> hits;
};

using Bytes = std::vector<std::uint8_t>;

Bytes encode_query_request(const QueryRequestMsg& msg);
Bytes encode_partial_result(const PartialResultMsg& msg);
Bytes encode_control(const std::string& json);

FrameType frame_type(std::span<const std::uint8_t> payload);
QueryRequestMsg decode_query_request(std::span<const std::uint8_t> payload);
PartialResultMsg decode_partial_result(std::span<const std::uint8_t> payload);
std::string decode_control(std::span<const std::uint8_t> payload);

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(const std::string& hex);

}  // namespace pyramid
