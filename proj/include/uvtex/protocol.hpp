#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "uvtex/detector.hpp"
#include "uvtex/image.hpp"

namespace uvtex {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);  // ProtocolError on bad input

// One request/response line pair per image:
//   request  {"id": n, "width": W, "height": H, "pixels": "<base64 rgb8>"}
//   response {"id": n, "detections": [{"x1","y1","x2","y2","conf","label"}...]}
// Responses arrive in request order on a connection.
std::string encode_request(int id, const Image& image);
std::string encode_response(int id, const std::vector<Detection>& dets);
// Parses a response line and checks it against the expected id.
std::vector<Detection> decode_response(const std::string& line, int expected_id);
// Parses a request line; throws ProtocolError when malformed.
Image decode_request(const std::string& line, int& id_out);

// A blocking line-oriented byte channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  virtual std::string read_line(int timeout_ms) = 0;
};

// Spawns `argv` and talks over its stdin/stdout.
std::unique_ptr<LineChannel> open_subprocess_channel(const std::vector<std::string>& argv);
std::unique_ptr<LineChannel> open_tcp_channel(const std::string& host, int port);

// Detector abstraction shared by the built-in and wire-protocol detectors.
class DetectorClient {
 public:
  virtual ~DetectorClient() = default;
  virtual std::vector<Detection> detect(const Image& image) = 0;
  // Non-null for detectors with exact input gradients.
  virtual const ToyDetector* toy() const { return nullptr; }
};

class ToyDetectorClient : public DetectorClient {
 public:
  explicit ToyDetectorClient(ToyDetector det) : det_(std::move(det)) {}
  std::vector<Detection> detect(const Image& image) override {
    return toy_forward(det_, image);
  }
  const ToyDetector* toy() const override { return &det_; }

 private:
  ToyDetector det_;
};

// Serializes requests over one channel; ids increase monotonically.
class WireDetectorClient : public DetectorClient {
 public:
  WireDetectorClient(std::unique_ptr<LineChannel> channel, int timeout_ms = 10000)
      : channel_(std::move(channel)), timeout_ms_(timeout_ms) {}
  std::vector<Detection> detect(const Image& image) override;

 private:
  std::unique_ptr<LineChannel> channel_;
  int timeout_ms_;
  int next_id_ = 0;
};

struct StubConfig {
  double conf = 0.7;
  double box_scale = 0.5;  // centered box side as a fraction of the image
  std::string label = "person";
};

// Reference constant-detection stub; serves until EOF.
void run_stub_server(std::istream& in, std::ostream& out, const StubConfig& cfg);
// Single-connection TCP variant; serves one client then returns.
void run_stub_tcp(int port, const StubConfig& cfg);

}  // namespace uvtex
