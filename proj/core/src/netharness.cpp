#include "pbal/netharness.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <utility>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace pbal::net {

namespace {

constexpr std::size_t kHeaderBytes = 1 + 1 + 4 + 4 + 8;
// Generous cap so a corrupted length prefix cannot trigger a huge allocation.
constexpr std::uint32_t kMaxFrameBytes = 1u << 24;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return take(1)[0]; }

    std::uint32_t u32() {
        const auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    std::uint64_t u64() {
        const auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    double f64() {
        const double v = std::bit_cast<double>(u64());
        if (!std::isfinite(v)) {
            throw MalformedFrame("frame: non-finite value in payload");
        }
        return v;
    }

    [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

  private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (remaining() < n) {
            throw MalformedFrame("frame: truncated");
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

// --- in-process transport -------------------------------------------------

struct Mailbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Message> queue;
};

struct Hub {
    explicit Hub(std::size_t n_rg) : boxes(n_rg + 1) {}

    Mailbox& box(NodeRole who) { return who.is_aggregator() ? boxes.back() : boxes.at(who.index()); }

    std::deque<Mailbox> boxes;
};

class InprocEndpoint final : public Endpoint {
  public:
    InprocEndpoint(std::shared_ptr<Hub> hub, NodeRole self) : hub_(std::move(hub)), self_(self) {}

    void send(const Message& msg) override {
        auto& box = hub_->box(msg.recipient);
        {
            std::lock_guard lock(box.mu);
            box.queue.push_back(msg);
        }
        box.cv.notify_one();
    }

    Message receive(std::chrono::milliseconds timeout) override {
        auto& box = hub_->box(self_);
        std::unique_lock lock(box.mu);
        if (!box.cv.wait_for(lock, timeout, [&] { return !box.queue.empty(); })) {
            throw TimeoutError("no message within " + std::to_string(timeout.count()) + " ms");
        }
        Message m = std::move(box.queue.front());
        box.queue.pop_front();
        return m;
    }

  private:
    std::shared_ptr<Hub> hub_;
    NodeRole self_;
};

// --- loopback socket transport --------------------------------------------

[[noreturn]] void sys_fail(const std::string& what) {
    throw std::runtime_error("socket: " + what + ": " + std::strerror(errno));
}

class Fd {
  public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }

    [[nodiscard]] int get() const { return fd_; }

  private:
    void reset() {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        fd_ = -1;
    }
    int fd_ = -1;
};

void write_all(int fd, std::span<const std::uint8_t> bytes) {
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            sys_fail("send");
        }
        bytes = bytes.subspan(static_cast<std::size_t>(n));
    }
}

void read_exact(int fd, std::span<std::uint8_t> out) {
    while (!out.empty()) {
        const ssize_t n = ::recv(fd, out.data(), out.size(), 0);
        if (n == 0) {
            throw ProtocolError("socket: connection closed during handshake");
        }
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            sys_fail("recv");
        }
        out = out.subspan(static_cast<std::size_t>(n));
    }
}

void set_nodelay(int fd) {
    int one = 1;
    if (::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one) != 0) {
        sys_fail("setsockopt(TCP_NODELAY)");
    }
}

// One inbound byte stream with its partially received frames.
struct Link {
    Fd fd;
    NodeRole peer;
    std::vector<std::uint8_t> buffer;

    std::optional<Message> pop_frame() {
        const auto size = frame_size(buffer);
        if (!size || buffer.size() < *size) {
            return std::nullopt;
        }
        Message m = deserialize(std::span(buffer).first(*size));
        buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(*size));
        if (m.sender != peer) {
            throw ProtocolError("socket: sender id does not match the connection");
        }
        return m;
    }

    // Returns false on orderly shutdown by the peer.
    bool fill() {
        std::uint8_t chunk[4096];
        for (;;) {
            const ssize_t n = ::recv(fd.get(), chunk, sizeof chunk, 0);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n < 0) {
                sys_fail("recv");
            }
            buffer.insert(buffer.end(), chunk, chunk + n);
            return n > 0;
        }
    }
};

class SocketEndpoint final : public Endpoint {
  public:
    explicit SocketEndpoint(std::vector<Link> links) : links_(std::move(links)) {}

    void send(const Message& msg) override {
        const auto frame = serialize(msg);
        for (auto& l : links_) {
            if (l.peer == msg.recipient) {
                write_all(l.fd.get(), frame);
                return;
            }
        }
        throw ProtocolError("socket: no connection to recipient " + std::to_string(msg.recipient.id));
    }

    Message receive(std::chrono::milliseconds timeout) override {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        std::vector<pollfd> fds(links_.size());
        for (;;) {
            for (std::size_t j = 0; j < links_.size(); ++j) {
                auto& l = links_[(next_ + j) % links_.size()];
                if (auto m = l.pop_frame()) {
                    next_ = (next_ + j + 1) % links_.size();
                    return std::move(*m);
                }
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                throw TimeoutError("no message within " + std::to_string(timeout.count()) + " ms");
            }
            for (std::size_t j = 0; j < links_.size(); ++j) {
                fds[j] = pollfd{links_[j].fd.get(), POLLIN, 0};
            }
            const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(left.count()));
            if (rc < 0 && errno != EINTR) {
                sys_fail("poll");
            }
            for (std::size_t j = 0; rc > 0 && j < links_.size(); ++j) {
                if ((fds[j].revents & (POLLIN | POLLHUP | POLLERR)) != 0 && !links_[j].fill()) {
                    throw ProtocolError("socket: peer " + std::to_string(links_[j].peer.id) + " disconnected");
                }
            }
        }
    }

  private:
    std::vector<Link> links_;
    std::size_t next_ = 0;
};

Network make_socket_network(std::size_t n_rg) {
    Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
    if (listener.get() < 0) {
        sys_fail("socket");
    }
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        sys_fail("bind");
    }
    if (::listen(listener.get(), static_cast<int>(std::max<std::size_t>(n_rg, 1))) != 0) {
        sys_fail("listen");
    }
    socklen_t len = sizeof addr;
    if (::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        sys_fail("getsockname");
    }

    Network net;
    std::vector<Link> aggregator_links;
    for (std::size_t i = 0; i < n_rg; ++i) {
        Fd client(::socket(AF_INET, SOCK_STREAM, 0));
        if (client.get() < 0) {
            sys_fail("socket");
        }
        if (::connect(client.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            sys_fail("connect");
        }
        set_nodelay(client.get());
        // Hello: the RG's id, so the accepted connection can be attributed.
        std::vector<std::uint8_t> hello;
        put_u32(hello, static_cast<std::uint32_t>(i));
        write_all(client.get(), hello);

        Fd server(::accept(listener.get(), nullptr, nullptr));
        if (server.get() < 0) {
            sys_fail("accept");
        }
        set_nodelay(server.get());
        std::uint8_t got[4];
        read_exact(server.get(), got);
        const std::uint32_t id = Reader(got).u32();
        if (id != i) {
            throw ProtocolError("socket: handshake id mismatch");
        }
        aggregator_links.push_back(Link{std::move(server), NodeRole::rg(i), {}});

        std::vector<Link> rg_link;
        rg_link.push_back(Link{std::move(client), NodeRole::aggregator(), {}});
        net.rgs.push_back(std::make_unique<SocketEndpoint>(std::move(rg_link)));
    }
    net.aggregator = std::make_unique<SocketEndpoint>(std::move(aggregator_links));
    return net;
}

class TappedEndpoint final : public Endpoint {
  public:
    TappedEndpoint(std::unique_ptr<Endpoint> inner, Tap tap) : inner_(std::move(inner)), tap_(std::move(tap)) {}

    void send(const Message& msg) override {
        tap_(msg);
        inner_->send(msg);
    }
    Message receive(std::chrono::milliseconds timeout) override { return inner_->receive(timeout); }

  private:
    std::unique_ptr<Endpoint> inner_;
    Tap tap_;
};

// --- protocol -------------------------------------------------------------

void rg_node(std::size_t i, const ScalarTerm& term, double a, double rho, Endpoint& ep,
             std::chrono::milliseconds timeout, const std::optional<Fault>& fault) {
    // The coordinator starts every RG variable at 0.
    if (!term.contains(0.0)) {
        throw ProtocolError("rg " + std::to_string(i) + ": feasible interval does not contain 0");
    }
    const NodeRole self = NodeRole::rg(i);
    const bool faulty = fault && fault->rg == i;
    ep.send(Message{self, NodeRole::aggregator(), 0, Announce{a}});
    std::uint64_t expected = 0;
    for (;;) {
        const Message m = ep.receive(timeout);
        if (!m.sender.is_aggregator()) {
            throw ProtocolError("rg " + std::to_string(i) + ": message from a non-aggregator node");
        }
        if (std::holds_alternative<Terminate>(m.body)) {
            return;
        }
        const auto* sig = std::get_if<Signal>(&m.body);
        if (sig == nullptr) {
            throw ProtocolError("rg " + std::to_string(i) + ": unexpected " + std::string(to_string(m.kind())));
        }
        if (m.iteration != expected) {
            throw ProtocolError("rg " + std::to_string(i) + ": signal for iteration " +
                                std::to_string(m.iteration) + ", expected " + std::to_string(expected));
        }
        std::uint64_t k = m.iteration;
        if (faulty && k == fault->iteration) {
            if (fault->kind == Fault::Kind::silent) {
                return;
            }
            ++k;
        }
        ep.send(Message{self, NodeRole::aggregator(), k, Report{prox(term, sig->v, rho)}});
        ++expected;
    }
}

std::vector<double> collect_announcements(Endpoint& ep, std::size_t n, std::chrono::milliseconds timeout) {
    std::vector<double> supply(n);
    std::vector<bool> seen(n, false);
    for (std::size_t got = 0; got < n; ++got) {
        const Message m = ep.receive(timeout);
        const auto* ann = std::get_if<Announce>(&m.body);
        if (ann == nullptr || m.sender.is_aggregator() || m.sender.index() >= n) {
            throw ProtocolError("aggregator: expected one Announce per RG before iterating");
        }
        if (seen[m.sender.index()]) {
            throw ProtocolError("aggregator: duplicate Announce from rg " + std::to_string(m.sender.index()));
        }
        seen[m.sender.index()] = true;
        supply[m.sender.index()] = ann->a;
    }
    return supply;
}

} // namespace

std::string_view to_string(MessageKind kind) {
    switch (kind) {
    case MessageKind::announce:
        return "Announce";
    case MessageKind::signal:
        return "Signal";
    case MessageKind::report:
        return "Report";
    case MessageKind::terminate:
        return "Terminate";
    }
    return "?";
}

std::vector<std::uint8_t> serialize(const Message& msg) {
    std::vector<std::uint8_t> out;
    put_u32(out, 0);
    out.push_back(kWireVersion);
    out.push_back(static_cast<std::uint8_t>(msg.kind()));
    put_u32(out, msg.sender.id);
    put_u32(out, msg.recipient.id);
    put_u64(out, msg.iteration);
    std::visit(
        [&](const auto& body) {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, Announce>) {
                put_f64(out, body.a);
            } else if constexpr (std::is_same_v<T, Signal>) {
                put_f64(out, body.v);
            } else if constexpr (std::is_same_v<T, Report>) {
                put_f64(out, body.y);
            } else {
                put_u32(out, static_cast<std::uint32_t>(body.solution.size()));
                for (double v : body.solution) {
                    put_f64(out, v);
                }
            }
        },
        msg.body);
    const auto len = static_cast<std::uint32_t>(out.size() - 4);
    for (int i = 0; i < 4; ++i) {
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
    }
    return out;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer) {
    if (buffer.size() < 4) {
        return std::nullopt;
    }
    const std::uint32_t len = Reader(buffer.first(4)).u32();
    if (len < kHeaderBytes || len > kMaxFrameBytes) {
        throw MalformedFrame("frame: implausible length " + std::to_string(len));
    }
    return std::size_t{4} + len;
}

Message deserialize(std::span<const std::uint8_t> frame) {
    Reader r(frame);
    const std::uint32_t len = r.u32();
    if (len != r.remaining()) {
        throw MalformedFrame("frame: length prefix " + std::to_string(len) + " does not match " +
                             std::to_string(r.remaining()) + " bytes");
    }
    const std::uint8_t version = r.u8();
    if (version != kWireVersion) {
        throw VersionMismatch("frame: version " + std::to_string(version) + ", expected " +
                              std::to_string(kWireVersion));
    }
    const std::uint8_t kind = r.u8();
    Message m;
    m.sender = NodeRole{r.u32()};
    m.recipient = NodeRole{r.u32()};
    m.iteration = r.u64();
    switch (static_cast<MessageKind>(kind)) {
    case MessageKind::announce:
        m.body = Announce{r.f64()};
        break;
    case MessageKind::signal:
        m.body = Signal{r.f64()};
        break;
    case MessageKind::report:
        m.body = Report{r.f64()};
        break;
    case MessageKind::terminate: {
        const std::uint32_t count = r.u32();
        if (r.remaining() != std::size_t{count} * 8) {
            throw MalformedFrame("frame: Terminate count does not match payload size");
        }
        Terminate t;
        t.solution.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            t.solution.push_back(r.f64());
        }
        m.body = std::move(t);
        break;
    }
    default:
        throw MalformedFrame("frame: unknown message kind " + std::to_string(kind));
    }
    if (r.remaining() != 0) {
        throw MalformedFrame("frame: trailing bytes");
    }
    return m;
}

std::string_view to_string(TransportKind kind) { return kind == TransportKind::inproc ? "inproc" : "socket"; }

TransportKind parse_transport(std::string_view name) {
    if (name == "inproc") {
        return TransportKind::inproc;
    }
    if (name == "socket") {
        return TransportKind::socket;
    }
    throw std::invalid_argument("unknown transport '" + std::string(name) + "' (expected inproc or socket)");
}

Network make_network(TransportKind kind, std::size_t n_rg, Tap tap) {
    Network net;
    if (kind == TransportKind::socket) {
        net = make_socket_network(n_rg);
    } else {
        auto hub = std::make_shared<Hub>(n_rg);
        net.aggregator = std::make_unique<InprocEndpoint>(hub, NodeRole::aggregator());
        for (std::size_t i = 0; i < n_rg; ++i) {
            net.rgs.push_back(std::make_unique<InprocEndpoint>(hub, NodeRole::rg(i)));
        }
    }
    if (tap) {
        net.aggregator = std::make_unique<TappedEndpoint>(std::move(net.aggregator), tap);
        for (auto& ep : net.rgs) {
            ep = std::make_unique<TappedEndpoint>(std::move(ep), tap);
        }
    }
    return net;
}

OwnedProblem split(const SeparableProblem& p, std::span<const double> supply) {
    const std::size_t n = p.index_map.n_rg;
    if (p.size() != n + 4 || supply.size() != n) {
        throw std::invalid_argument("split: expected n_rg RG terms, four aggregator terms and n_rg supplies");
    }
    OwnedProblem owned;
    owned.rg_terms.assign(p.terms.begin(), p.terms.begin() + static_cast<std::ptrdiff_t>(n));
    owned.rg_supply.assign(supply.begin(), supply.end());
    for (std::size_t j = 0; j < 4; ++j) {
        owned.aggregator_terms[j] = p.terms[n + j];
    }
    return owned;
}

SeparableProblem assemble(const OwnedProblem& owned) {
    SeparableProblem p;
    p.index_map.n_rg = owned.n_rg();
    p.terms = owned.rg_terms;
    p.terms.insert(p.terms.end(), owned.aggregator_terms.begin(), owned.aggregator_terms.end());
    p.balance_rhs = std::accumulate(owned.rg_supply.begin(), owned.rg_supply.end(), 0.0);
    return p;
}

ProtocolResult run_protocol(const OwnedProblem& owned, const ProtocolOptions& opts) {
    const std::size_t n = owned.n_rg();
    if (owned.rg_supply.size() != n || n == 0) {
        throw std::invalid_argument("run_protocol: need at least one RG and one supply value per RG");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!owned.rg_terms[i].contains(0.0)) {
            throw std::invalid_argument("run_protocol: interval of rg " + std::to_string(i) + " does not contain 0");
        }
    }

    ProtocolResult result;
    std::mutex count_mu;
    const Tap counter = [&](const Message& m) {
        std::lock_guard lock(count_mu);
        switch (m.kind()) {
        case MessageKind::announce:
            ++result.counts.announce;
            break;
        case MessageKind::signal:
            ++result.counts.signal;
            break;
        case MessageKind::report:
            ++result.counts.report;
            break;
        case MessageKind::terminate:
            ++result.counts.terminate;
            break;
        }
        if (opts.tap) {
            opts.tap(m);
        }
    };
    Network net = make_network(opts.transport, n, counter);

    std::vector<std::exception_ptr> rg_errors(n);
    std::vector<std::jthread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        threads.emplace_back([&, i] {
            try {
                rg_node(i, owned.rg_terms[i], owned.rg_supply[i], opts.admm.rho, *net.rgs[i], opts.timeout,
                        opts.fault);
            } catch (...) {
                rg_errors[i] = std::current_exception();
            }
        });
    }

    Endpoint& agg = *net.aggregator;
    const NodeRole self = NodeRole::aggregator();
    const auto terminate_all = [&](const std::vector<double>* y) {
        for (std::size_t i = 0; i < n; ++i) {
            Terminate t;
            if (y != nullptr) {
                t.solution = {(*y)[i]};
            }
            agg.send(Message{self, NodeRole::rg(i), 0, std::move(t)});
        }
    };

    std::exception_ptr agg_error;
    try {
        const std::vector<double> supply = collect_announcements(agg, n, opts.timeout);
        const double rhs = std::accumulate(supply.begin(), supply.end(), 0.0);

        std::vector<double> y0(n + 4, 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            const auto& t = owned.aggregator_terms[j];
            y0[n + j] = std::clamp(0.0, t.lo, t.hi);
        }

        std::vector<bool> reported(n);
        const ProxRound round = [&](std::span<const double> v, std::size_t k, std::span<double> y_out) {
            for (std::size_t i = 0; i < n; ++i) {
                agg.send(Message{self, NodeRole::rg(i), k, Signal{v[i]}});
            }
            for (std::size_t j = 0; j < 4; ++j) {
                y_out[n + j] = prox(owned.aggregator_terms[j], v[n + j], opts.admm.rho);
            }
            // Barrier: all N reports for iteration k before the dual update.
            std::fill(reported.begin(), reported.end(), false);
            for (std::size_t got = 0; got < n; ++got) {
                const Message m = agg.receive(opts.timeout);
                const auto* rep = std::get_if<Report>(&m.body);
                if (rep == nullptr || m.sender.is_aggregator() || m.sender.index() >= n) {
                    throw ProtocolError("aggregator: expected Report, got " + std::string(to_string(m.kind())));
                }
                if (m.iteration != k) {
                    throw ProtocolError("aggregator: report for iteration " + std::to_string(m.iteration) +
                                        " from rg " + std::to_string(m.sender.index()) + " during iteration " +
                                        std::to_string(k));
                }
                if (reported[m.sender.index()]) {
                    throw ProtocolError("aggregator: duplicate report from rg " + std::to_string(m.sender.index()));
                }
                reported[m.sender.index()] = true;
                y_out[m.sender.index()] = rep->y;
            }
        };

        // Objectives are a harness-side diagnostic on the assembled problem.
        const SeparableProblem full = assemble(owned);
        const ObjectiveFn objective = [&](std::span<const double> y) { return per_slot_objective(y, full); };
        result.admm = run_admm_rounds(std::move(y0), {n + 4, rhs}, opts.admm, round, objective);
        terminate_all(&result.admm.solution.y);
    } catch (...) {
        agg_error = std::current_exception();
        try {
            terminate_all(nullptr);
        } catch (...) {
            // Best effort: RGs also time out on their own.
        }
    }
    for (auto& t : threads) {
        t.join();
    }
    // An RG failure is the root cause of whatever the aggregator saw.
    for (const auto& e : rg_errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    if (agg_error) {
        std::rethrow_exception(agg_error);
    }
    return result;
}

} // namespace pbal::net
