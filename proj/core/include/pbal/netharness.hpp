#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "pbal/admm.hpp"
#include "pbal/perslot.hpp"

namespace pbal::net {

/// Node identity on the wire. RGs use their index; the aggregator has a
/// reserved id.
struct NodeRole {
    static constexpr std::uint32_t kAggregatorId = 0xFFFF'FFFFu;

    std::uint32_t id = kAggregatorId;

    static NodeRole aggregator() { return NodeRole{kAggregatorId}; }
    static NodeRole rg(std::size_t index) { return NodeRole{static_cast<std::uint32_t>(index)}; }
    [[nodiscard]] bool is_aggregator() const { return id == kAggregatorId; }
    [[nodiscard]] std::size_t index() const { return id; }

    friend bool operator==(NodeRole, NodeRole) = default;
};

struct Announce {
    double a = 0.0;
    friend bool operator==(const Announce&, const Announce&) = default;
};
struct Signal {
    double v = 0.0;
    friend bool operator==(const Signal&, const Signal&) = default;
};
struct Report {
    double y = 0.0;
    friend bool operator==(const Report&, const Report&) = default;
};
/// Final value of the recipient's variable; the aggregator keeps the full vector.
struct Terminate {
    std::vector<double> solution;
    friend bool operator==(const Terminate&, const Terminate&) = default;
};

using Payload = std::variant<Announce, Signal, Report, Terminate>;

enum class MessageKind : std::uint8_t { announce = 1, signal = 2, report = 3, terminate = 4 };

struct Message {
    NodeRole sender;
    NodeRole recipient;
    std::uint64_t iteration = 0;
    Payload body;

    [[nodiscard]] MessageKind kind() const { return static_cast<MessageKind>(body.index() + 1); }
    friend bool operator==(const Message&, const Message&) = default;
};

[[nodiscard]] std::string_view to_string(MessageKind kind);

inline constexpr std::uint8_t kWireVersion = 1;

/// Frame: u32 length of the rest | u8 version | u8 kind | u32 sender |
/// u32 recipient | u64 iteration | payload. Announce/Signal/Report carry one
/// f64; Terminate carries a u32 count and that many f64. Little-endian.
[[nodiscard]] std::vector<std::uint8_t> serialize(const Message& msg);

class MalformedFrame : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class VersionMismatch : public MalformedFrame {
  public:
    using MalformedFrame::MalformedFrame;
};

/// Parses exactly one frame. Throws MalformedFrame on truncation, trailing
/// bytes, unknown kinds or non-finite values, VersionMismatch on a foreign
/// version byte.
[[nodiscard]] Message deserialize(std::span<const std::uint8_t> frame);

/// Size of the frame starting at `buffer`, or nullopt if the length prefix is
/// incomplete.
[[nodiscard]] std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer);

class TimeoutError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One node's connection to the network.
class Endpoint {
  public:
    virtual ~Endpoint() = default;
    virtual void send(const Message& msg) = 0;
    /// Throws TimeoutError when nothing arrives within `timeout`.
    virtual Message receive(std::chrono::milliseconds timeout) = 0;
};

/// Observes every message as it is sent.
using Tap = std::function<void(const Message&)>;

enum class TransportKind { inproc, socket };

[[nodiscard]] std::string_view to_string(TransportKind kind);
[[nodiscard]] TransportKind parse_transport(std::string_view name);

/// Creates the connected endpoints for one aggregator and n_rg RGs. The
/// socket transport listens on 127.0.0.1 with an ephemeral port.
struct Network {
    std::unique_ptr<Endpoint> aggregator;
    std::vector<std::unique_ptr<Endpoint>> rgs;
};

[[nodiscard]] Network make_network(TransportKind kind, std::size_t n_rg, Tap tap = {});

/// What each party holds before the protocol starts.
struct OwnedProblem {
    std::vector<ScalarTerm> rg_terms;
    /// a_i, announced by RG i.
    std::vector<double> rg_supply;
    /// l_m, -g, -e_b, e_s.
    std::array<ScalarTerm, 4> aggregator_terms;

    [[nodiscard]] std::size_t n_rg() const { return rg_terms.size(); }
};

/// Splits a built slot problem: the RG terms go to their owners and the
/// balance target is replaced by the announced supplies.
[[nodiscard]] OwnedProblem split(const SeparableProblem& p, std::span<const double> supply);

/// The problem the protocol solves, with balance_rhs = sum of the supplies.
[[nodiscard]] SeparableProblem assemble(const OwnedProblem& owned);

/// Test hook: makes one RG misbehave at a given iteration.
struct Fault {
    enum class Kind { silent, wrong_iteration };
    Kind kind = Kind::silent;
    std::size_t rg = 0;
    std::size_t iteration = 0;
};

struct ProtocolOptions {
    TransportKind transport = TransportKind::inproc;
    AdmmOptions admm;
    std::chrono::milliseconds timeout{5000};
    Tap tap;
    std::optional<Fault> fault;
};

struct MessageCounts {
    std::size_t announce = 0;
    std::size_t signal = 0;
    std::size_t report = 0;
    std::size_t terminate = 0;

    [[nodiscard]] std::size_t total() const { return announce + signal + report + terminate; }
};

struct ProtocolResult {
    AdmmResult admm;
    MessageCounts counts;
};

/// Runs the aggregator in the calling thread and one thread per RG. The
/// aggregator drives the same coordination loop as run_admm with each prox
/// step replaced by a Signal/Report exchange, so iterates match run_admm on
/// assemble(owned) exactly. Objectives in the result are evaluated by the
/// harness on the assembled problem; no node sees another's terms.
[[nodiscard]] ProtocolResult run_protocol(const OwnedProblem& owned, const ProtocolOptions& opts = {});

} // namespace pbal::net
