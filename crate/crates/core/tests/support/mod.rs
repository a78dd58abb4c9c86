pub mod span_oracle;
