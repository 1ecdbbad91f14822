pub mod hfs_oracle;
