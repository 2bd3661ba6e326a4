#include "pyramid/wire.hpp"

#include <cstring>

namespace pyramid {

namespace {

template <typename T>
void put(Bytes& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

struct Reader {
    std::span<const std::uint8_t> buf;
    std::size_t off = 0;

    template <typename T>
    T get() {
        if (off + sizeof(T) > buf.size()) throw FormatError("truncated frame", off);
        T v{};
        std::memcpy(&v, buf.data() + off, sizeof(T));
        off += sizeof(T);
        return v;
    }
};

void put_header(Bytes& out, FrameType type, std::uint64_t epoch, std::uint64_t query_id) {
    out.push_back(std::uint8_t(type));
    put(out, epoch);
    put(out, query_id);
}

}  // namespace

Bytes encode_query_request(const QueryRequestMsg& msg) {
    Bytes out;
    put_header(out, FrameType::QueryRequest, msg.epoch, msg.query_id);
    put(out, msg.k);
    put(out, msg.search_l);
    put(out, std::uint32_t(msg.vector.size()));
    for (float v : msg.vector) put(out, v);
    put(out, std::uint32_t(msg.reply_to.size()));
    out.insert(out.end(), msg.reply_to.begin(), msg.reply_to.end());
    return out;
}

Bytes encode_partial_result(const PartialResultMsg& msg) {
    Bytes out;
    put_header(out, FrameType::PartialResult, msg.epoch, msg.query_id);
    put(out, msg.shard_id);
    put(out, std::uint32_t(msg.hits.size()));
    for (const auto& h : msg.hits) {
        put(out, std::uint64_t(h.id));
        put(out, h.score);
    }
    return out;
}

Bytes encode_control(const std::string& json) {
    Bytes out;
    put_header(out, FrameType::Control, 0, 0);
    out.insert(out.end(), json.begin(), json.end());
    return out;
}

FrameType frame_type(std::span<const std::uint8_t> payload) {
    if (payload.empty()) throw FormatError("empty frame", 0);
    const auto t = payload[0];
    if (t < 1 || t > 3) throw FormatError("unknown frame type", 0);
    return FrameType(t);
}

QueryRequestMsg decode_query_request(std::span<const std::uint8_t> payload) {
    Reader r{payload};
    if (FrameType(r.get<std::uint8_t>()) != FrameType::QueryRequest)
        throw FormatError("not a QueryRequest frame", 0);
    QueryRequestMsg msg;
    msg.epoch = r.get<std::uint64_t>();
    msg.query_id = r.get<std::uint64_t>();
    msg.k = r.get<std::uint32_t>();
    msg.search_l = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint32_t>();
    msg.vector.reserve(dim);
    for (std::uint32_t i = 0; i < dim; ++i) msg.vector.push_back(r.get<float>());
    const auto len = r.get<std::uint32_t>();
    if (r.off + len > payload.size()) throw FormatError("truncated reply_to", r.off);
    msg.reply_to.assign(reinterpret_cast<const char*>(payload.data() + r.off), len);
    return msg;
}

PartialResultMsg decode_partial_result(std::span<const std::uint8_t> payload) {
    Reader r{payload};
    if (FrameType(r.get<std::uint8_t>()) != FrameType::PartialResult)
        throw FormatError("not a PartialResult frame", 0);
    PartialResultMsg msg;
    msg.epoch = r.get<std::uint64_t>();
    msg.query_id = r.get<std::uint64_t>();
    msg.shard_id = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    msg.hits.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto id = r.get<std::uint64_t>();
        const auto sc = r.get<double>();
        msg.hits.push_back({id, sc});
    }
    return msg;
}

std::string decode_control(std::span<const std::uint8_t> payload) {
    Reader r{payload};
    if (FrameType(r.get<std::uint8_t>()) != FrameType::Control)
        throw FormatError("not a Control frame", 0);
    r.get<std::uint64_t>();
    r.get<std::uint64_t>();
    return std::string(reinterpret_cast<const char*>(payload.data() + r.off),
                       payload.size() - r.off);
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw FormatError("odd hex length", 0);
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FormatError("bad hex digit", 0);
    };
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2)
        out.push_back(std::uint8_t(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    return out;
}

}  // namespace pyramid
