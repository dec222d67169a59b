#include "uvtex/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "uvtex/errors.hpp"

namespace uvtex {

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static const auto table = [] {
    std::array<int, 256> t;
    t.fill(-1);
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    return t;
  }();
  if (text.size() % 4 != 0) throw ProtocolError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char ch = text[i + j];
      if (ch == '=') {
        if (i + 4 != text.size() || j < 2) throw ProtocolError("base64: misplaced padding");
        vals[j] = 0;
        ++pad;
      } else {
        if (pad > 0) throw ProtocolError("base64: data after padding");
        vals[j] = table[static_cast<unsigned char>(ch)];
        if (vals[j] < 0) throw ProtocolError("base64: invalid character");
      }
    }
    const std::uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

std::string encode_request(int id, const Image& image) {
  nlohmann::json j;
  j["id"] = id;
  j["width"] = image.width;
  j["height"] = image.height;
  j["pixels"] = base64_encode(image_to_rgb8(image));
  return j.dump();
}

std::string encode_response(int id, const std::vector<Detection>& dets) {
  nlohmann::json j;
  j["id"] = id;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) {
    arr.push_back({{"x1", d.box.x1},
                   {"y1", d.box.y1},
                   {"x2", d.box.x2},
                   {"y2", d.box.y2},
                   {"conf", d.conf},
                   {"label", d.label}});
  }
  j["detections"] = arr;
  return j.dump();
}

std::vector<Detection> decode_response(const std::string& line, int expected_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("detector response is not valid JSON: ") + e.what());
  }
  try {
    const int id = j.at("id").get<int>();
    if (id != expected_id)
      throw ProtocolError("detector response id " + std::to_string(id) +
                          " does not match request id " + std::to_string(expected_id));
    std::vector<Detection> dets;
    for (const auto& d : j.at("detections")) {
      Detection det;
      det.box = {d.at("x1").get<double>(), d.at("y1").get<double>(),
                 d.at("x2").get<double>(), d.at("y2").get<double>()};
      det.conf = d.at("conf").get<double>();
      det.label = d.at("label").get<std::string>();
      if (!(det.conf >= 0.0 && det.conf <= 1.0))
        throw ProtocolError("detector response confidence outside [0, 1]");
      if (!det.box.valid()) throw ProtocolError("detector response box is inverted");
      dets.push_back(std::move(det));
    }
    return dets;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed detector response: ") + e.what());
  }
}

Image decode_request(const std::string& line, int& id_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("detector request is not valid JSON: ") + e.what());
  }
  try {
    id_out = j.at("id").get<int>();
    const int w = j.at("width").get<int>();
    const int h = j.at("height").get<int>();
    if (w < 1 || h < 1) throw ProtocolError("detector request has empty dimensions");
    const auto bytes = base64_decode(j.at("pixels").get<std::string>());
    if (bytes.size() != static_cast<std::size_t>(w) * h * 3)
      throw ProtocolError("detector request payload size mismatch");
    return image_from_rgb8(w, h, bytes);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed detector request: ") + e.what());
  }
}

namespace {

// Shared fd-based line reader with poll timeouts.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, pid_t child = -1)
      : read_fd_(read_fd), write_fd_(write_fd), child_(child) {}

  ~FdChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0 && read_fd_ != write_fd_) ::close(read_fd_);
    if (child_ > 0) {
      int status = 0;
      ::waitpid(child_, &status, 0);
    }
  }

  void write_line(const std::string& line) override {
    std::string payload = line;
    payload.push_back('\n');
    std::size_t off = 0;
    while (off < payload.size()) {
      const ssize_t n = ::write(write_fd_, payload.data() + off, payload.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("detector channel write failed: ") +
                            std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(int timeout_ms) override {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      struct pollfd pfd {
        read_fd_, POLLIN, 0
      };
      const int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc == 0) throw ProtocolError("detector response timed out");
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("detector channel poll failed: ") +
                            std::strerror(errno));
      }
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n == 0) throw ProtocolError("detector closed the connection mid-request");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("detector channel read failed: ") +
                            std::strerror(errno));
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int read_fd_;
  int write_fd_;
  pid_t child_;
  std::string buffer_;
};

}  // namespace

std::unique_ptr<LineChannel> open_subprocess_channel(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("subprocess detector: empty command");
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw ProtocolError(std::string("pipe failed: ") + std::strerror(errno));
  ::signal(SIGPIPE, SIG_IGN);
  const pid_t pid = ::fork();
  if (pid < 0) throw ProtocolError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<FdChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> open_tcp_channel(const std::string& host, int port) {
  struct addrinfo hints {};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  struct addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr)
    throw ProtocolError("tcp detector: cannot resolve " + host);
  int fd = -1;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    throw ProtocolError("tcp detector: cannot connect to " + host + ":" + service);
  ::signal(SIGPIPE, SIG_IGN);
  return std::make_unique<FdChannel>(fd, fd);
}

std::vector<Detection> WireDetectorClient::detect(const Image& image) {
  const int id = next_id_++;
  channel_->write_line(encode_request(id, image));
  return decode_response(channel_->read_line(timeout_ms_), id);
}

void run_stub_server(std::istream& in, std::ostream& out, const StubConfig& cfg) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int id = 0;
    const Image img = decode_request(line, id);
    const double side_x = img.width * cfg.box_scale;
    const double side_y = img.height * cfg.box_scale;
    Detection det;
    det.box = {(img.width - side_x) / 2.0, (img.height - side_y) / 2.0,
               (img.width + side_x) / 2.0, (img.height + side_y) / 2.0};
    det.conf = cfg.conf;
    det.label = cfg.label;
    out << encode_response(id, {det}) << "\n";
    out.flush();
  }
}

void run_stub_tcp(int port, const StubConfig& cfg) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw ProtocolError(std::string("socket failed: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  struct sockaddr_in addr {};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(listener, reinterpret_cast<struct sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listener);
    throw ProtocolError(std::string("bind failed: ") + std::strerror(errno));
  }
  if (::listen(listener, 1) != 0) {
    ::close(listener);
    throw ProtocolError(std::string("listen failed: ") + std::strerror(errno));
  }
  const int conn = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (conn < 0) throw ProtocolError(std::string("accept failed: ") + std::strerror(errno));
  ::signal(SIGPIPE, SIG_IGN);

  FdChannel channel(conn, conn);
  try {
    for (;;) {
      const std::string line = channel.read_line(-1);
      if (line.empty()) continue;
      int id = 0;
      const Image img = decode_request(line, id);
      const double side_x = img.width * cfg.box_scale;
      const double side_y = img.height * cfg.box_scale;
      Detection det;
      det.box = {(img.width - side_x) / 2.0, (img.height - side_y) / 2.0,
                 (img.width + side_x) / 2.0, (img.height + side_y) / 2.0};
      det.conf = cfg.conf;
      det.label = cfg.label;
      channel.write_line(encode_response(id, {det}));
    }
  } catch (const ProtocolError&) {
    // Client hung up; a closed connection ends the serving loop.
  }
}

}  // namespace uvtex
