#include "atm/wire.hpp"

#include <algorithm>

namespace atm::wire {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v)
    {
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
        out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    void u32(std::uint32_t v)
    {
        for (int shift = 24; shift >= 0; shift -= 8)
            out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    void u64(std::uint64_t v)
    {
        for (int shift = 56; shift >= 0; shift -= 8)
            out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
    void bytes(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }

    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(ByteView in) : in_(in) {}

    std::uint8_t u8()
    {
        need(1);
        return in_[pos_++];
    }
    std::uint16_t u16()
    {
        need(2);
        const auto v = static_cast<std::uint16_t>((in_[pos_] << 8) | in_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v = (v << 8) | in_[pos_++];
        return v;
    }
    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v = (v << 8) | in_[pos_++];
        return v;
    }
    ByteView take(std::size_t n)
    {
        need(n);
        auto v = in_.subspan(pos_, n);
        pos_ += n;
        return v;
    }
    template <std::size_t N>
    std::array<std::uint8_t, N> array()
    {
        std::array<std::uint8_t, N> a{};
        const auto v = take(N);
        std::copy(v.begin(), v.end(), a.begin());
        return a;
    }
    ByteView rest()
    {
        auto v = in_.subspan(pos_);
        pos_ = in_.size();
        return v;
    }
    void finish() const
    {
        if (pos_ != in_.size())
            throw MalformedPayload("trailing bytes in payload");
    }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw MalformedPayload("payload truncated");
    }

    ByteView in_;
    std::size_t pos_ = 0;
};

ResponseCode read_code(Reader& r)
{
    const auto code = response_code_from_byte(r.u8());
    if (!code)
        throw MalformedPayload("unknown response code");
    return *code;
}

void check_pan(std::string_view pan)
{
    if (pan.empty() || pan.size() > 19)
        throw MalformedPayload("PAN length out of range");
    if (!std::all_of(pan.begin(), pan.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw MalformedPayload("PAN contains non-digits");
}

constexpr std::size_t kMinutiaSize = 7;

} // namespace

Bytes encode_minutiae(const minutiae::FingerprintTemplate& t)
{
    Writer w;
    w.u16(static_cast<std::uint16_t>(t.size()));
    for (const auto& m : t.minutiae()) {
        w.u16(static_cast<std::uint16_t>(m.x));
        w.u16(static_cast<std::uint16_t>(m.y));
        w.u16(static_cast<std::uint16_t>(m.angle));
        w.u8(static_cast<std::uint8_t>(m.kind));
    }
    return w.take();
}

minutiae::FingerprintTemplate decode_minutiae(ByteView bytes)
{
    Reader r(bytes);
    const std::size_t count = r.u16();
    if (bytes.size() != 2 + count * kMinutiaSize)
        throw MalformedPayload("minutiae count does not match byte length");
    std::vector<minutiae::Minutia> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        minutiae::Minutia m;
        m.x = r.u16();
        m.y = r.u16();
        m.angle = r.u16();
        const auto kind = r.u8();
        if (kind > 1)
            throw MalformedPayload("unknown minutia kind byte");
        m.kind = static_cast<minutiae::Kind>(kind);
        out.push_back(m);
    }
    try {
        return minutiae::FingerprintTemplate(std::move(out));
    } catch (const minutiae::TemplateError& e) {
        throw MalformedPayload(std::string("invalid minutiae: ") + e.what());
    }
}

MessageType message_type(const Message& m) noexcept
{
    static constexpr MessageType types[] = {
        MessageType::AuthCardReq, MessageType::AuthCardResp, MessageType::BioVerifyReq, MessageType::BioVerifyResp,
        MessageType::TxnReq,      MessageType::TxnResp,      MessageType::EndSession,   MessageType::Err,
    };
    return types[m.index()];
}

Frame encode_message(const Message& m)
{
    Writer w;
    std::visit(
        [&w](const auto& msg) {
            using T = std::decay_t<decltype(msg)>;
            if constexpr (std::is_same_v<T, AuthCardReq>) {
                check_pan(msg.pan);
                w.u8(static_cast<std::uint8_t>(msg.pan.size()));
                w.bytes(ByteView(reinterpret_cast<const std::uint8_t*>(msg.pan.data()), msg.pan.size()));
                w.bytes(msg.pin_block);
            } else if constexpr (std::is_same_v<T, AuthCardResp>) {
                w.u8(static_cast<std::uint8_t>(msg.code));
                w.bytes(msg.token);
                w.u8(msg.retries_remaining);
            } else if constexpr (std::is_same_v<T, BioVerifyReq>) {
                w.bytes(msg.token);
                w.bytes(encode_minutiae(msg.sample));
            } else if constexpr (std::is_same_v<T, BioVerifyResp>) {
                w.u8(static_cast<std::uint8_t>(msg.code));
                w.u16(msg.score_milli);
            } else if constexpr (std::is_same_v<T, TxnReq>) {
                w.bytes(msg.token);
                w.u8(static_cast<std::uint8_t>(msg.type));
                w.u64(msg.amount);
            } else if constexpr (std::is_same_v<T, TxnResp>) {
                if (msg.records.size() > 255)
                    throw MalformedPayload("at most 255 records per response");
                w.u8(static_cast<std::uint8_t>(msg.code));
                w.u64(msg.balance);
                w.u8(static_cast<std::uint8_t>(msg.records.size()));
                for (const auto& r : msg.records) {
                    w.u32(r.seq);
                    w.u8(r.kind);
                    w.u64(r.amount);
                    w.u64(r.resulting_balance);
                    w.u64(r.timestamp);
                }
            } else if constexpr (std::is_same_v<T, EndSession>) {
                w.bytes(msg.token);
            } else if constexpr (std::is_same_v<T, ErrMsg>) {
                w.u8(static_cast<std::uint8_t>(msg.code));
            }
        },
        m);
    Frame f;
    f.msg_type = message_type(m);
    f.payload = w.take();
    return f;
}

Message decode_message(const Frame& f)
{
    Reader r(f.payload);
    switch (f.msg_type) {
    case MessageType::AuthCardReq: {
        AuthCardReq m;
        const auto len = r.u8();
        const auto pan = r.take(len);
        m.pan.assign(pan.begin(), pan.end());
        check_pan(m.pan);
        m.pin_block = r.array<8>();
        r.finish();
        return m;
    }
    case MessageType::AuthCardResp: {
        AuthCardResp m;
        m.code = read_code(r);
        m.token = r.array<8>();
        m.retries_remaining = r.u8();
        r.finish();
        return m;
    }
    case MessageType::BioVerifyReq: {
        const auto token = r.array<8>();
        return BioVerifyReq{token, decode_minutiae(r.rest())};
    }
    case MessageType::BioVerifyResp: {
        BioVerifyResp m;
        m.code = read_code(r);
        m.score_milli = r.u16();
        r.finish();
        return m;
    }
    case MessageType::TxnReq: {
        TxnReq m;
        m.token = r.array<8>();
        const auto type = r.u8();
        if (type < 1 || type > 4)
            throw MalformedPayload("unknown transaction type");
        m.type = static_cast<TxnType>(type);
        m.amount = r.u64();
        r.finish();
        return m;
    }
    case MessageType::TxnResp: {
        TxnResp m;
        m.code = read_code(r);
        m.balance = r.u64();
        const auto count = r.u8();
        for (int i = 0; i < count; ++i) {
            WireRecord rec;
            rec.seq = r.u32();
            rec.kind = r.u8();
            if (rec.kind != 1 && rec.kind != 2)
                throw MalformedPayload("unknown record kind");
            rec.amount = r.u64();
            rec.resulting_balance = r.u64();
            rec.timestamp = r.u64();
            m.records.push_back(rec);
        }
        r.finish();
        return m;
    }
    case MessageType::EndSession: {
        EndSession m;
        m.token = r.array<8>();
        r.finish();
        return m;
    }
    case MessageType::Err: {
        ErrMsg m;
        m.code = read_code(r);
        r.finish();
        return m;
    }
    }
    throw MalformedPayload("unknown message type");
}

} // namespace atm::wire
