#include "emgssi/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

namespace emgssi::stream {

namespace {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }
  int fd() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve host " + ep.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

bool stopped(const std::atomic<bool>* stop) { return stop && stop->load(); }

// Waits until fd is readable/writable or the stop flag is raised; false on stop.
bool wait_fd(int fd, short events, const std::atomic<bool>* stop) {
  pollfd p{fd, events, 0};
  while (!stopped(stop)) {
    const int r = ::poll(&p, 1, 100);
    if (r > 0) return true;
    if (r < 0 && errno != EINTR) throw TransportError(errno_text("poll"));
  }
  return false;
}

// false on orderly peer close or stop before any byte; throws on error or mid-message EOF.
bool read_exact(int fd, std::uint8_t* buf, std::size_t n, const std::atomic<bool>* stop) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_fd(fd, POLLIN, stop)) return false;
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-message");
    }
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(errno_text("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

// false when the peer went away or stop was raised.
bool write_all(int fd, const std::uint8_t* buf, std::size_t n, const std::atomic<bool>* stop) {
  std::size_t sent = 0;
  while (sent < n) {
    if (!wait_fd(fd, POLLOUT, stop)) return false;
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == EPIPE || errno == ECONNRESET) return false;
      throw TransportError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}
  // Blocks while full.
  void push(T v) {
    std::unique_lock lock(m_);
    not_full_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
    if (closed_) return;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
  }
  std::optional<T> pop() {
    std::unique_lock lock(m_);
    not_empty_.wait(lock, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }
  // Consumers drain what is queued, then see end of stream.
  void close() {
    std::lock_guard lock(m_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex m_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> q_;
  bool closed_ = false;
};

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || v > 65535) throw std::invalid_argument("bad port in endpoint '" + text + "'");
  ep.port = static_cast<std::uint16_t>(v);
  return ep;
}

ServeStats serve_replay(const ChannelMatrix& samples, const ServeConfig& config) {
  if (!(config.frame_ms > 0.0)) throw std::invalid_argument("frame_ms must be positive");
  const auto frame_samples = static_cast<std::size_t>(std::llround(config.frame_ms * kSampleRateHz / 1000.0));
  const std::vector<Frame> frames = frames_from_samples(samples, frame_samples, config.scale_uv_per_count);

  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener) throw TransportError(errno_text("socket"));
  const int one = 1;
  ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(config.endpoint);
  if (::bind(listener.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw TransportError(errno_text("bind"));
  if (::listen(listener.fd(), 1) != 0) throw TransportError(errno_text("listen"));
  socklen_t len = sizeof addr;
  ::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  if (config.on_listening) config.on_listening(ntohs(addr.sin_port));

  ServeStats stats;
  if (!wait_fd(listener.fd(), POLLIN, config.stop)) return stats;
  Socket client(::accept(listener.fd(), nullptr, nullptr));
  if (!client) throw TransportError(errno_text("accept"));
  ::setsockopt(client.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (stopped(config.stop)) break;
    if (config.pacing) {
      const auto due = start + std::chrono::duration<double, std::milli>(config.frame_ms * static_cast<double>(i));
      std::this_thread::sleep_until(due);
    }
    const Frame& f = frames[i];
    if (config.drop_seqs.count(f.seq)) {
      ++stats.frames_dropped;
      continue;
    }
    const std::vector<std::uint8_t> body = encode_frame(f);
    std::vector<std::uint8_t> msg(4 + body.size());
    const auto n = static_cast<std::uint32_t>(body.size());
    std::memcpy(msg.data(), &n, 4);
    std::memcpy(msg.data() + 4, body.data(), body.size());
    if (!write_all(client.fd(), msg.data(), msg.size(), config.stop)) {
      stats.client_disconnected = !stopped(config.stop);
      break;
    }
    ++stats.frames_sent;
    stats.samples_sent += f.n_samples;
  }
  client.shutdown_both();
  return stats;
}

StreamStats ingest_decode(const model::Model& model, const IngestConfig& config,
                          const std::function<void(const Prediction&)>& on_prediction) {
  const sockaddr_in addr = resolve(config.endpoint);
  Socket sock;
  std::string last_error = "no attempt";
  for (int attempt = 0; attempt < std::max(1, config.connect_attempts) && !stopped(config.stop); ++attempt) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s) throw TransportError(errno_text("socket"));
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      sock = std::move(s);
      break;
    }
    last_error = errno_text("connect");
    std::this_thread::sleep_for(std::chrono::milliseconds(config.retry_delay_ms));
  }
  if (!sock) {
    if (stopped(config.stop)) return {};
    throw TransportError("could not connect to " + config.endpoint.host + ":" +
                         std::to_string(config.endpoint.port) + " (" + last_error + ")");
  }

  BoundedQueue<Frame> queue(std::max<std::size_t>(1, config.queue_capacity));
  std::exception_ptr reader_error;
  std::thread reader([&] {
    try {
      std::vector<std::uint8_t> buf;
      for (;;) {
        std::uint8_t len_bytes[4];
        if (!read_exact(sock.fd(), len_bytes, 4, config.stop)) break;
        std::uint32_t n = 0;
        std::memcpy(&n, len_bytes, 4);
        if (n < kFrameHeaderBytes || n > kFrameHeaderBytes + 2 * kChannels * kMaxFrameSamples)
          throw TransportError("implausible frame length " + std::to_string(n));
        buf.resize(n);
        if (!read_exact(sock.fd(), buf.data(), n, config.stop)) throw TransportError("stream ended mid-frame");
        queue.push(decode_frame(buf));
      }
    } catch (...) {
      reader_error = std::current_exception();
    }
    queue.close();
  });

  LiveDecoder decoder(model, config.decoder);
  std::exception_ptr consumer_error;
  try {
    while (auto f = queue.pop()) {
      for (const Prediction& p : decoder.push(*f))
        if (on_prediction) on_prediction(p);
    }
  } catch (...) {
    consumer_error = std::current_exception();
    sock.shutdown_both();
    queue.close();
  }
  reader.join();
  if (consumer_error) std::rethrow_exception(consumer_error);
  if (reader_error) std::rethrow_exception(reader_error);
  return decoder.stats();
}

}  // namespace emgssi::stream
