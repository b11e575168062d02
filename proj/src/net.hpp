#pragma once

// Small POSIX socket helpers shared by the device transport and simulator.

#include <cstdint>
#include <span>
#include <string>

namespace nudge::net {

struct HostPort {
  std::string host;
  int port = 0;
};

// "host:port"; throws Error on anything else.
HostPort parse_host_port(const std::string& addr);

// Returns a listening socket; the bound port is written to `bound_port`.
int listen_tcp(const HostPort& hp, int& bound_port);
int connect_tcp(const HostPort& hp, int timeout_ms);

// Writes every byte or throws Error.
void write_all(int fd, std::span<const std::uint8_t> bytes);

// Waits up to timeout_ms for readability. Returns true if readable (or hung up).
bool wait_readable(int fd, int timeout_ms);

void close_fd(int& fd);

}  // namespace nudge::net
