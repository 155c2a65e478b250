#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;
pub mod anfis;
pub mod dynamics;
pub mod optim;
pub mod pid;
pub mod pwpf;
pub mod roles;
pub mod sensors;
pub mod sim;
