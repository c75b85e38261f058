#pragma once

// WebSocket transport for TeleopSession. One client at a time; the simulator
// runs on its own thread and never waits for the network.

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "tgrasp/teleop.hpp"

namespace tgrasp {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double speed = 1.0;          // simulated seconds per wall second
};

class TeleopServer {
 public:
  TeleopServer(TeleopOptions session, ServerOptions opt)
      : session_(std::move(session)), opt_(std::move(opt)), acceptor_(ioc_) {
    namespace net = boost::asio;
    const net::ip::tcp::endpoint ep(net::ip::make_address(opt_.address), opt_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(1);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves one session until the client disconnects or stop() is called.
  void run() {
    namespace net = boost::asio;
    namespace ws = boost::beast::websocket;
    net::ip::tcp::socket sock(ioc_);
    acceptor_.accept(sock);
    ws_.emplace(std::move(sock));
    ws_->text(true);
    ws_->accept();

    start_read();
    std::thread io([this] { ioc_.run(); });
    sim_loop();
    net::post(ioc_, [this] {
      boost::beast::error_code ec;
      if (ws_ && ws_->is_open()) ws_->close(ws::close_code::normal, ec);
    });
    io.join();
  }

  void stop() { done_ = true; }

  // Read-only view for tests once run() has returned.
  const TeleopSession& session() const { return session_; }

 private:
  void start_read() {
    ws_->async_read(buffer_, [this](boost::beast::error_code ec, std::size_t) {
      if (ec) {
        done_ = true;
        return;
      }
      const std::string text = boost::beast::buffers_to_string(buffer_.data());
      buffer_.consume(buffer_.size());
      nlohmann::json reply;
      {
        std::lock_guard lock(session_mu_);
        reply = session_.handle_message(text);
      }
      if (!reply.is_null()) enqueue_reply(reply.dump());
      start_read();
    });
  }

  // Runs on the io thread.
  void enqueue_reply(std::string text) {
    replies_.push_back(std::move(text));
    flush();
  }

  void flush() {
    if (writing_ || !ws_ || !ws_->is_open()) return;
    if (!replies_.empty()) {
      out_ = std::move(replies_.front());
      replies_.pop_front();
    } else if (latest_state_) {
      out_ = std::move(*latest_state_);
      latest_state_.reset();
    } else {
      return;
    }
    writing_ = true;
    ws_->async_write(boost::asio::buffer(out_), [this](boost::beast::error_code ec, std::size_t) {
      writing_ = false;
      if (ec) {
        done_ = true;
        return;
      }
      flush();
    });
  }

  void sim_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / (sim::kTickHz * opt_.speed)));
    auto next = clock::now();
    while (!done_) {
      next += period;
      std::this_thread::sleep_until(next);
      std::vector<nlohmann::json> replies;
      std::optional<std::string> state;
      {
        std::lock_guard lock(session_mu_);
        replies = session_.tick();
        if (session_.state_due()) state = session_.state_message().dump();
      }
      boost::asio::post(ioc_, [this, replies = std::move(replies), state = std::move(state)]() mutable {
        for (auto& r : replies) replies_.push_back(r.dump());
        if (state) latest_state_ = std::move(*state);  // an unsent older state is dropped
        flush();
      });
    }
  }

  TeleopSession session_;
  ServerOptions opt_;
  boost::asio::io_context ioc_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::optional<boost::beast::websocket::stream<boost::asio::ip::tcp::socket>> ws_;
  boost::beast::flat_buffer buffer_;
  std::mutex session_mu_;
  std::atomic<bool> done_{false};

  // io-thread state
  std::deque<std::string> replies_;
  std::optional<std::string> latest_state_;
  std::string out_;
  bool writing_ = false;
};

}  // namespace tgrasp
