// SPDX-License-Identifier: Apache-2.0
//
// Data-channel messages, all sealed under k_data once the session is active.
//
//   Put        str(name) | u32 len | bytes
//   PutResult  status
//   Get        str(name)
//   GetResult  status | u32 len | bytes
//   List       (empty)
//   ListResult u16 count | str(name)...
#pragma once

#include <string>
#include <vector>

#include "csg/cbc.hpp"
#include "csg/protocol/frame.hpp"
#include "csg/protocol/session.hpp"
#include "csg/vault/object_store.hpp"
#include "csg/vault/registry.hpp"

namespace csg::proto {

enum class DataStatus : std::uint8_t {
  ok = 0x01,
  no_such_object = 0x02,
  quota_exceeded = 0x03,
  invalid_name = 0x04,
  storage_error = 0x05,
};

inline std::string_view status_name(DataStatus s) {
  switch (s) {
    case DataStatus::ok: return "ok";
    case DataStatus::no_such_object: return "no such object";
    case DataStatus::quota_exceeded: return "quota exceeded";
    case DataStatus::invalid_name: return "invalid name";
    case DataStatus::storage_error: return "storage error";
  }
  return "unknown status";
}

inline DataStatus parse_status(std::uint8_t b) {
  if (b < 0x01 || b > 0x05) throw Error(Errc::malformed, "unknown data status");
  return static_cast<DataStatus>(b);
}

struct GetResponse {
  DataStatus status = DataStatus::ok;
  Bytes data;
};

namespace detail {

inline const aes::CipherKey& data_key(SessionState& state, std::string_view op) {
  require_phase(state, Phase::session_active, op);
  return state.session_keys().k_data;
}

inline Bytes open_data(SessionState& state, ByteView payload, std::string_view op) {
  const auto& key = data_key(state, op);
  try {
    return aes::open(payload, key);
  } catch (...) {
    state.close();
    throw;
  }
}

template <typename Fn>
auto parse_or_close(SessionState& state, Fn&& fn) {
  try {
    return fn();
  } catch (...) {
    state.close();
    throw;
  }
}

}  // namespace detail

// Client requests -------------------------------------------------------------

inline Frame make_put(SessionState& state, std::string_view name, ByteView data, RandomSource& rng) {
  const auto& key = detail::data_key(state, "put");
  Bytes inner;
  put_str(inner, name);
  if (data.size() > 0xffffffffu) throw Error(Errc::frame_too_large, "object too large");
  put_u32(inner, static_cast<std::uint32_t>(data.size()));
  put_bytes(inner, data);
  return {MessageType::put, aes::seal(inner, key, rng)};
}

inline Frame make_get(SessionState& state, std::string_view name, RandomSource& rng) {
  const auto& key = detail::data_key(state, "get");
  Bytes inner;
  put_str(inner, name);
  return {MessageType::get, aes::seal(inner, key, rng)};
}

inline Frame make_list(SessionState& state, RandomSource& rng) {
  const auto& key = detail::data_key(state, "list");
  return {MessageType::list, aes::seal({}, key, rng)};
}

inline DataStatus read_put_result(SessionState& state, ByteView payload) {
  Bytes inner = detail::open_data(state, payload, "PutResult");
  return detail::parse_or_close(state, [&] {
    ByteReader r(inner);
    auto s = parse_status(r.u8());
    r.expect_end();
    return s;
  });
}

inline GetResponse read_get_result(SessionState& state, ByteView payload) {
  Bytes inner = detail::open_data(state, payload, "GetResult");
  return detail::parse_or_close(state, [&] {
    ByteReader r(inner);
    GetResponse out;
    out.status = parse_status(r.u8());
    auto len = r.u32();
    auto body = r.take(len);
    out.data.assign(body.begin(), body.end());
    r.expect_end();
    return out;
  });
}

inline std::vector<std::string> read_list_result(SessionState& state, ByteView payload) {
  Bytes inner = detail::open_data(state, payload, "ListResult");
  return detail::parse_or_close(state, [&] {
    ByteReader r(inner);
    std::vector<std::string> names(r.u16());
    for (auto& n : names) n = r.str();
    r.expect_end();
    return names;
  });
}

// Server side -------------------------------------------------------------------

inline DataStatus status_for(Errc code) {
  switch (code) {
    case Errc::no_such_object: return DataStatus::no_such_object;
    case Errc::quota_exceeded: return DataStatus::quota_exceeded;
    case Errc::invalid_name: return DataStatus::invalid_name;
    default: return DataStatus::storage_error;
  }
}

struct DataReply {
  Frame frame;
  DataStatus status = DataStatus::ok;
};

// Serves one Put/Get/List for the bound customer. Storage failures become status
// codes; an undecryptable or malformed request throws and closes the session.
inline DataReply data_exchange(SessionState& state, const Frame& request, vault::ObjectStore& store,
                               const vault::CustomerRecord& customer, RandomSource& rng) {
  if (request.type != MessageType::put && request.type != MessageType::get && request.type != MessageType::list) {
    state.close();
    throw Error(Errc::protocol_order, "not a data request");
  }
  Bytes inner = detail::open_data(state, request.payload, type_name(request.type));
  if (!state.customer_id || *state.customer_id != customer.customer_id) {
    state.close();
    throw Error(Errc::protocol_order, "session is not bound to this customer");
  }
  const auto& key = state.session_keys().k_data;
  const std::string& cid = customer.customer_id;

  DataReply reply;
  Bytes out;
  switch (request.type) {
    case MessageType::put: {
      auto [name, body] = detail::parse_or_close(state, [&] {
        ByteReader r(inner);
        std::string n = r.str();
        auto len = r.u32();
        auto b = r.take(len);
        r.expect_end();
        return std::pair{n, b};
      });
      try {
        store.put(cid, name, body, customer.quota_bytes);
      } catch (const Error& e) {
        reply.status = status_for(e.code());
      }
      put_u8(out, static_cast<std::uint8_t>(reply.status));
      reply.frame = {MessageType::put_result, aes::seal(out, key, rng)};
      break;
    }
    case MessageType::get: {
      std::string name = detail::parse_or_close(state, [&] {
        ByteReader r(inner);
        std::string n = r.str();
        r.expect_end();
        return n;
      });
      Bytes data;
      try {
        data = store.get(cid, name);
      } catch (const Error& e) {
        reply.status = status_for(e.code());
      }
      put_u8(out, static_cast<std::uint8_t>(reply.status));
      put_u32(out, static_cast<std::uint32_t>(data.size()));
      put_bytes(out, data);
      reply.frame = {MessageType::get_result, aes::seal(out, key, rng)};
      break;
    }
    default: {
      if (!inner.empty()) {
        state.close();
        throw Error(Errc::malformed, "List carries no payload");
      }
      std::vector<std::string> names;
      try {
        names = store.list(cid);
      } catch (const Error& e) {
        reply.status = status_for(e.code());
      }
      if (names.size() > 0xffff) names.resize(0xffff);
      put_u16(out, static_cast<std::uint16_t>(names.size()));
      for (const auto& n : names) put_str(out, n);
      reply.frame = {MessageType::list_result, aes::seal(out, key, rng)};
      break;
    }
  }
  return reply;
}

}  // namespace csg::proto
