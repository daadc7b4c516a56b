// Copyright 2026 The KernelForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <thread>

#include "kernelforge/error.hpp"
#include "kernelforge/zmtp.hpp"

using namespace kernelforge::zmtp;
using std::chrono::milliseconds;

TEST_SUITE("zmtp") {

TEST_CASE("socket compatibility follows the ZMTP table") {
  CHECK(compatible(SocketType::kRouter, "DEALER"));
  CHECK(compatible(SocketType::kRouter, "REQ"));
  CHECK(compatible(SocketType::kRouter, "ROUTER"));
  CHECK(compatible(SocketType::kPub, "SUB"));
  CHECK(compatible(SocketType::kRep, "REQ"));
  CHECK(compatible(SocketType::kRep, "DEALER"));
  CHECK_FALSE(compatible(SocketType::kPub, "DEALER"));
  CHECK_FALSE(compatible(SocketType::kSub, "SUB"));
  CHECK_FALSE(compatible(SocketType::kRouter, "PUB"));
  CHECK(socket_type_name(SocketType::kDealer) == "DEALER");
}

TEST_CASE("router and dealer exchange multipart messages") {
  Socket router(SocketType::kRouter);
  auto port = router.bind("127.0.0.1", 0);
  REQUIRE(port != 0);
  Socket dealer(SocketType::kDealer, "client-1");
  dealer.connect("127.0.0.1", port, milliseconds(2000));

  REQUIRE(dealer.send({"hello", "", std::string("\0\1\2", 3)}));
  auto in = router.recv(milliseconds(2000));
  REQUIRE(in);
  REQUIRE(in->size() == 4);
  CHECK((*in)[1] == "hello");
  CHECK((*in)[2].empty());
  CHECK((*in)[3] == std::string("\0\1\2", 3));

  // Reply routed by the id the router assigned.
  REQUIRE(router.send({(*in)[0], "world"}));
  auto back = dealer.recv(milliseconds(2000));
  REQUIRE(back);
  CHECK(*back == Multipart{"world"});
}

TEST_CASE("large frames use the long encoding") {
  Socket router(SocketType::kRouter);
  auto port = router.bind("127.0.0.1", 0);
  Socket dealer(SocketType::kDealer);
  dealer.connect("127.0.0.1", port, milliseconds(2000));
  std::string big(300000, 'z');
  big[12345] = 'q';
  REQUIRE(dealer.send({big}));
  auto in = router.recv(milliseconds(2000));
  REQUIRE(in);
  CHECK((*in)[1] == big);
}

TEST_CASE("router drops messages for unknown peers") {
  Socket router(SocketType::kRouter);
  router.bind("127.0.0.1", 0);
  CHECK_FALSE(router.send({"nobody", "x"}));
}

TEST_CASE("pub delivers by subscription prefix") {
  Socket pub(SocketType::kPub);
  auto port = pub.bind("127.0.0.1", 0);
  Socket sub(SocketType::kSub);
  sub.subscribe("sta");
  sub.connect("127.0.0.1", port, milliseconds(2000));

  // The subscription reaches the publisher asynchronously.
  std::optional<Multipart> got;
  for (int i = 0; i < 200 && !got; ++i) {
    pub.send({"other", "ignored"});
    pub.send({"status", "busy"});
    got = sub.recv(milliseconds(10));
  }
  REQUIRE(got);
  CHECK(*got == Multipart{"status", "busy"});
  while (auto more = sub.recv(milliseconds(50))) CHECK((*more)[0] == "status");
}

TEST_CASE("req and rep strip and restore the envelope") {
  Socket rep(SocketType::kRep);
  auto port = rep.bind("127.0.0.1", 0);
  Socket req(SocketType::kReq);
  req.connect("127.0.0.1", port, milliseconds(2000));

  REQUIRE(req.send({"ping"}));
  auto in = rep.recv(milliseconds(2000));
  REQUIRE(in);
  REQUIRE(in->size() == 3);
  CHECK((*in)[1].empty());
  CHECK((*in)[2] == "ping");
  REQUIRE(rep.send(*in));
  auto echo = req.recv(milliseconds(2000));
  REQUIRE(echo);
  CHECK(*echo == Multipart{"ping"});
}

TEST_CASE("connect times out when nothing listens") {
  Socket probe(SocketType::kRouter);
  auto port = probe.bind("127.0.0.1", 0);
  probe.close();
  Socket dealer(SocketType::kDealer);
  CHECK_THROWS_AS(dealer.connect("127.0.0.1", port, milliseconds(100)),
                  kernelforge::Error);
}

TEST_CASE("close unblocks recv and is idempotent") {
  Socket router(SocketType::kRouter);
  router.bind("127.0.0.1", 0);
  std::thread closer([&] {
    std::this_thread::sleep_for(milliseconds(50));
    router.close();
  });
  auto start = std::chrono::steady_clock::now();
  CHECK_FALSE(router.recv(milliseconds(5000)));
  CHECK(std::chrono::steady_clock::now() - start < milliseconds(2000));
  closer.join();
  router.close();
}

TEST_CASE("peer count tracks connections") {
  Socket router(SocketType::kRouter);
  auto port = router.bind("127.0.0.1", 0);
  {
    Socket a(SocketType::kDealer), b(SocketType::kDealer);
    a.connect("127.0.0.1", port, milliseconds(2000));
    b.connect("127.0.0.1", port, milliseconds(2000));
    for (int i = 0; i < 100 && router.peer_count() < 2; ++i) {
      std::this_thread::sleep_for(milliseconds(10));
    }
    CHECK(router.peer_count() == 2);
  }
  for (int i = 0; i < 200 && router.peer_count() > 0; ++i) {
    std::this_thread::sleep_for(milliseconds(10));
  }
  CHECK(router.peer_count() == 0);
}

}
