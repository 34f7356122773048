// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include <cstdio>

int main() {
  std::puts("stylestream: subcommands not wired up yet");
  return 2;
}
