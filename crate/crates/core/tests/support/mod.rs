pub mod gossip_oracle;
